from .sampler import CHUNK_SIZE, SampleTrace, encode_components, generate, translate_image, translate_set

__all__ = ["CHUNK_SIZE", "SampleTrace", "encode_components", "generate", "translate_image", "translate_set"]
