"""Prompt-guided multi-contrast MRI synthesis at desk scale.

A numpy-backed library: a small autodiff tensor core, fuzzy ROI prompt
generation, a dual-branch multi-scale transformer generator with local and
global fusion, PatchGAN adversarial training, procedural phantom data, and
PSNR/SSIM/NMSE evaluation. A CLI (``tlp``) and a local HTTP inference
service sit on top.
"""

from .errors import (
    BadFractions,
    ConstantImage,
    CorruptHeader,
    EmptyOutput,
    FormatVersionMismatch,
    IOFailure,
    NanDetected,
    NonDivisibleExtent,
    NotScalar,
    OddExtent,
    OutOfRange,
    ShapeMismatch,
    TlpError,
    TooSmall,
    ZeroReference,
)
from .fpg import PromptConfig, build_kernel_set, generate_prompt, scale_step
from .model import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    LossConfig,
    discriminator_loss,
    generator_loss,
    load_checkpoint,
    save_checkpoint,
)
from .metrics import MetricReport, evaluate_split, masked_psnr, nmse, psnr, ssim
from .ops import conv2d, matmul, softmax
from .phantom import (
    PhantomCase,
    PhantomSpec,
    denormalize,
    generate_case,
    generate_dataset,
    make_splits,
    normalize,
    read_case,
    read_manifest,
    write_case,
)
from .tensor import Tensor, backward, concat, elementwise, no_grad
from .train import Adam, TrainConfig, adam_step, lr_at, train, train_epoch

__version__ = "0.1.0"
