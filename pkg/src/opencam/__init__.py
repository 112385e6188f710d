"""Toolkit for double-mask lensless optical-encryption cameras.

Generates encryption keys (multiplexing-PSF / scaling-mask pairs),
simulates encrypted captures, performs keyed Wiener decryption, and runs
classical known-plaintext / ciphertext-only attack protocols to quantify
how private a camera design actually is.
"""

__version__ = "0.1.0"

from .attacks import (
    AlsConfig,
    AttackReport,
    autocorrelation,
    ikpa,
    impulse_likeness,
    threshold_support_attack,
    uikpa,
    ukpa_average,
    ukpa_usr,
)
from .decrypt import WienerConfig, keyed_decrypt, scaling_normalize, wiener_decrypt
from .keygen import (
    Key,
    KeySpec,
    baseline_psf,
    draw_keyspec,
    generate_key,
    load_key,
    make_key,
    make_opencam_psf,
    make_scaling_mask,
    perlin_contour_psf,
    save_key,
)
from .metrics import psnr, scale_optimal_error, ssim, support_iou
from .noise_gen import ColoredNoiseSpec, PerlinSpec, Rng, colored_noise, perlin_field
from .optics import (
    Measurement,
    NoiseModel,
    SceneSpec,
    forward_double,
    forward_single,
    full_convolve,
    synthesize_scene,
    uniform_scene_response,
)
from .tensor_store import (
    load_png_as_scene,
    read_tensor,
    save_png_visualization,
    write_tensor,
)
