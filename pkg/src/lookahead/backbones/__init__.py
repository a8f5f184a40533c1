from .masks import (block_positions, build_batched_mid_mask, build_block_mask, causal_mask,
                    padding_mask)
from .pooling import cls_attention_pool, init_pool
from .tokenizer import CLS, EOS, MID_BASE, PAD, Vocabulary
from .transformer import (ForwardActivations, TransformerConfig, clm_forward, init_transformer,
                          linear, mlm_forward, transformer_forward)

__all__ = [
    "Vocabulary", "PAD", "EOS", "CLS", "MID_BASE",
    "TransformerConfig", "ForwardActivations", "init_transformer", "transformer_forward",
    "clm_forward", "mlm_forward", "linear",
    "causal_mask", "build_block_mask", "build_batched_mid_mask", "block_positions", "padding_mask",
    "cls_attention_pool", "init_pool",
]
