"""First-person-view abnormality scoring with a bank of cross-channel GANs.

Two conditional generator/discriminator pairs per zone group (frame to flow
and flow to frame, for straight-path and curve groups) are trained on normal
patrol footage; at test time the averaged patch-discriminator scores of real
and reconstructed pairs are differenced and fused by minimum across groups.
"""

__version__ = "0.1.0"
