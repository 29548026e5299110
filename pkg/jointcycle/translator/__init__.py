from .networks import PatchDiscriminator, TranslatorNet, cycle, discriminate, time_embed, translate

__all__ = ["PatchDiscriminator", "TranslatorNet", "cycle", "discriminate", "time_embed", "translate"]
