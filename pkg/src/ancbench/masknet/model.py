"""Multi-band encoder / masker / fusion / decoder pipeline.

Band 0 is the unfiltered reference; bands 1..Q come from the even filter bank.
Each band is encoded by a strided convolution (kernel k, stride k/2, no bias),
masked by a stack of selective state-space layers, fused by a 1x1 weighted sum
over bands and decoded by an overlap-add transposed convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..filterbank import FilterBankSpec, design_band_filter
from ..signal import Signal, conv_full
from . import ssm
from .config import MasknetConfig, frame_count


@dataclass(frozen=True, eq=False)
class LatentTensor:
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ConfigurationError("latent data must be a B x C matrix")
        if not np.all(np.isfinite(self.data)):
            raise ConfigurationError("latent data must be finite")

    @property
    def b_frames(self) -> int:
        return self.data.shape[0]

    @property
    def c_channels(self) -> int:
        return self.data.shape[1]


class ModelParams:
    """Named parameter arrays in a fixed order."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def names(self) -> list[str]:
        return list(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams({k: np.zeros_like(v) for k, v in self.arrays.items()})

    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def unflatten(self, flat: np.ndarray) -> "ModelParams":
        out, i = {}, 0
        for k, v in self.arrays.items():
            out[k] = np.asarray(flat[i : i + v.size], dtype=np.float64).reshape(v.shape).copy()
            i += v.size
        if i != flat.size:
            raise ConfigurationError(f"flat vector has {flat.size} values, expected {i}")
        return ModelParams(out)

    def band(self, i: int) -> dict[str, np.ndarray]:
        prefix = f"band{i}."
        return {k[len(prefix) :]: v for k, v in self.arrays.items() if k.startswith(prefix)}

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


@dataclass(eq=False)
class GradBundle:
    params: ModelParams
    input_grad: np.ndarray | None = None

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.params.arrays.values())))


def init_params(cfg: MasknetConfig, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    C, k = cfg.channels_c, cfg.kernel_k
    bound = np.sqrt(1.0 / (C * k))
    arrays: dict[str, np.ndarray] = {}
    for i in range(cfg.n_bands):
        arrays[f"band{i}.encoder"] = rng.uniform(-bound, bound, (C, k))
        for l in range(cfg.layers_for_band(i)):
            for name, val in ssm.init_layer(rng, C, cfg.ssm_state_dim, cfg.conv_width).items():
                arrays[f"band{i}.layer{l}.{name}"] = val
        arrays[f"band{i}.mask_W"] = rng.standard_normal((C, C)) / np.sqrt(C)
        arrays[f"band{i}.mask_b"] = np.zeros(C)
    arrays["fusion"] = np.full(cfg.n_bands, 1.0 / cfg.n_bands)
    arrays["decoder"] = rng.uniform(-bound, bound, (C, k))
    return ModelParams(arrays)


def check_params(params: ModelParams, cfg: MasknetConfig) -> None:
    ref = init_params(cfg)
    if ref.names() != params.names():
        raise ConfigurationError("parameter names do not match the configuration")
    for name in ref:
        if ref[name].shape != params[name].shape:
            raise ConfigurationError(f"{name}: shape {params[name].shape} != {ref[name].shape}")
    if not params.all_finite():
        raise ConfigurationError("parameters contain non-finite values")


# ---------------------------------------------------------------------------
# building blocks


def frames(x: np.ndarray, kernel: int) -> np.ndarray:
    """``B x k`` view of the length-``k`` windows at stride ``k/2``."""
    return np.lib.stride_tricks.sliding_window_view(x, kernel)[:: kernel // 2]


def overlap_add(frame_data: np.ndarray, signal_len: int) -> np.ndarray:
    """Adjoint of :func:`frames`: sum ``B x k`` frames placed at stride ``k/2``."""
    B, k = frame_data.shape
    hop = k // 2
    if (B + 1) * hop != signal_len:
        raise ConfigurationError(f"{B} frames of kernel {k} do not tile a signal of length {signal_len}")
    halves = np.zeros((B + 1, hop))
    halves[:B] += frame_data[:, :hop]
    halves[1:] += frame_data[:, hop:]
    return halves.ravel()


def _band_arrays(params: ModelParams, band_index: int) -> dict[str, np.ndarray]:
    return params.band(band_index)


def _encoder(params: ModelParams, band_index: int) -> np.ndarray:
    return params[f"band{band_index}.encoder"]


def encode(params: ModelParams, band_signal: Signal | np.ndarray, band_index: int = 0) -> LatentTensor:
    """Strided convolution ``H = frames(x) @ E^T`` (B x C)."""
    x = band_signal.samples if isinstance(band_signal, Signal) else np.asarray(band_signal, dtype=np.float64)
    E = _encoder(params, band_index)
    k = E.shape[1]
    frame_count(x.shape[0], k)
    return LatentTensor(frames(x, k) @ E.T)


def _layer_params(bp: dict[str, np.ndarray], layer: int) -> dict[str, np.ndarray]:
    prefix = f"layer{layer}."
    return {k[len(prefix) :]: v for k, v in bp.items() if k.startswith(prefix)}


def _n_layers(bp: dict[str, np.ndarray]) -> int:
    return len({k.split(".")[0] for k in bp if k.startswith("layer")})


def _mask_forward(bp: dict[str, np.ndarray], h: np.ndarray, mode: str, eps: float, keep: bool):
    if mode == "ones":
        return np.ones_like(h), None
    u = h
    caches = []
    for l in range(_n_layers(bp)):
        res = ssm.layer_forward(_layer_params(bp, l), u, eps, keep)
        u, c = res if keep else (res, None)
        caches.append(c)
    pre = u @ bp["mask_W"] + bp["mask_b"]
    m = ssm.sigmoid(pre) if mode == "sigmoid" else pre
    return m, (u, m, caches) if keep else None


def _mask_backward(bp: dict[str, np.ndarray], cache, gm: np.ndarray, mode: str) -> tuple[np.ndarray, dict]:
    grads: dict[str, np.ndarray] = {k: np.zeros_like(v) for k, v in bp.items() if k != "encoder"}
    if mode == "ones":
        return np.zeros_like(gm), grads
    u, m, caches = cache
    gpre = gm * m * (1.0 - m) if mode == "sigmoid" else gm
    grads["mask_W"] = u.T @ gpre
    grads["mask_b"] = gpre.sum(axis=0)
    gu = gpre @ bp["mask_W"].T
    for l in range(len(caches) - 1, -1, -1):
        gu, lg = ssm.layer_backward(_layer_params(bp, l), caches[l], gu)
        for name, g in lg.items():
            grads[f"layer{l}.{name}"] = g
    return gu, grads


def mask(params: ModelParams, h: LatentTensor, band_index: int = 0, mode: str = "sigmoid",
         eps: float = 1e-6) -> LatentTensor:
    """Mask ``M_i`` with the same B x C shape; entries in (0, 1) in sigmoid mode."""
    m, _ = _mask_forward(_band_arrays(params, band_index), h.data, mode, eps, keep=False)
    return LatentTensor(m)


def apply_mask(h: LatentTensor, m: LatentTensor) -> LatentTensor:
    if h.data.shape != m.data.shape:
        raise ConfigurationError(f"latent shape {h.data.shape} != mask shape {m.data.shape}")
    return LatentTensor(h.data * m.data)


def fuse(params: ModelParams, masked_latents) -> LatentTensor:
    """1x1 convolution over the band axis: ``K = sum_i w_i * H~_i``."""
    w = params["fusion"]
    if len(masked_latents) != w.shape[0]:
        raise ConfigurationError(f"expected {w.shape[0]} band latents, got {len(masked_latents)}")
    shapes = {lt.data.shape for lt in masked_latents}
    if len(shapes) != 1:
        raise ConfigurationError("all band latents must share a shape")
    return LatentTensor(np.tensordot(w, np.stack([lt.data for lt in masked_latents]), axes=1))


def decode(params: ModelParams, k_latent: LatentTensor, signal_len: int, sample_rate_hz: int = 16000) -> Signal:
    """Transposed strided convolution back to ``signal_len`` samples."""
    Dk = params["decoder"]
    if k_latent.c_channels != Dk.shape[0]:
        raise ConfigurationError("latent channel count does not match the decoder")
    return Signal(overlap_add(k_latent.data @ Dk, signal_len), sample_rate_hz)


# ---------------------------------------------------------------------------
# whole pipeline


def _bank(cfg: MasknetConfig) -> FilterBankSpec | None:
    if cfg.q == 0:
        return None
    return FilterBankSpec(q=cfg.q, num_taps=cfg.filter_taps, sample_rate_hz=cfg.sample_rate_hz)


def _band_filters(cfg: MasknetConfig) -> list[np.ndarray]:
    spec = _bank(cfg)
    if spec is None:
        return []
    return [design_band_filter(spec, i).taps for i in range(1, cfg.q + 1)]


def split_bands(cfg: MasknetConfig, x: np.ndarray) -> list[np.ndarray]:
    """Band 0 is ``x``; bands 1..Q are delay-compensated filter-bank outputs."""
    out = [x]
    n = x.shape[0]
    for h in _band_filters(cfg):
        delay = (h.shape[0] - 1) // 2
        out.append(conv_full(x, h)[delay : delay + n])
    return out


def _bands_adjoint(cfg: MasknetConfig, grads: list[np.ndarray]) -> np.ndarray:
    gx = grads[0].copy()
    n = gx.shape[0]
    for h, g in zip(_band_filters(cfg), grads[1:]):
        delay = (h.shape[0] - 1) // 2
        gx += conv_full(g, h[::-1])[delay : delay + n]
    return gx


def _as_array(cfg: MasknetConfig, x) -> np.ndarray:
    arr = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != cfg.signal_len_m:
        raise ConfigurationError(f"input must have length {cfg.signal_len_m}, got shape {arr.shape}")
    return arr


def forward(params: ModelParams, cfg: MasknetConfig, x, keep_cache: bool = False):
    """Cancelling signal ``y`` (length M) for reference ``x``.

    With ``keep_cache`` returns ``(y, cache)`` for :func:`backward_from_cache`.
    """
    xs = _as_array(cfg, x)
    k = cfg.kernel_k
    bands = split_bands(cfg, xs)
    fr, hs, ms, mcaches = [], [], [], []
    for i, b in enumerate(bands):
        f = frames(b, k)
        h = f @ params[f"band{i}.encoder"].T
        m, mc = _mask_forward(_band_arrays(params, i), h, cfg.mask_mode, cfg.norm_eps, keep_cache)
        fr.append(f)
        hs.append(h)
        ms.append(m)
        mcaches.append(mc)
    masked = [h * m for h, m in zip(hs, ms)]
    K = np.tensordot(params["fusion"], np.stack(masked), axes=1)
    y = overlap_add(K @ params["decoder"], cfg.signal_len_m)
    rate = x.sample_rate_hz if isinstance(x, Signal) else cfg.sample_rate_hz
    ys = Signal(y, rate)
    if not keep_cache:
        return ys
    return ys, dict(frames=fr, h=hs, m=ms, mask=mcaches, masked=masked, K=K)


def backward_from_cache(params: ModelParams, cfg: MasknetConfig, cache: dict, gy: np.ndarray,
                        want_input_grad: bool = False) -> GradBundle:
    gy = np.asarray(gy, dtype=np.float64)
    if gy.shape != (cfg.signal_len_m,):
        raise ConfigurationError(f"upstream gradient must have length {cfg.signal_len_m}")
    if not np.all(np.isfinite(gy)):
        raise ConfigurationError("upstream gradient contains non-finite values")
    k = cfg.kernel_k
    grads: dict[str, np.ndarray] = {}
    gframes = frames(gy, k)
    grads["decoder"] = cache["K"].T @ gframes
    gK = gframes @ params["decoder"].T
    w = params["fusion"]
    grads["fusion"] = np.array([np.sum(t * gK) for t in cache["masked"]])
    band_input_grads = []
    per_band: dict[int, dict[str, np.ndarray]] = {}
    for i in range(cfg.n_bands):
        gt = w[i] * gK
        gh = gt * cache["m"][i]
        gm = gt * cache["h"][i]
        gh_mask, mg = _mask_backward(_band_arrays(params, i), cache["mask"][i], gm, cfg.mask_mode)
        gh = gh + gh_mask
        E = params[f"band{i}.encoder"]
        mg["encoder"] = gh.T @ cache["frames"][i]
        per_band[i] = mg
        if want_input_grad:
            band_input_grads.append(overlap_add(gh @ E, cfg.signal_len_m))
    ordered = {}
    for name in params:
        if name.startswith("band"):
            i_str, rest = name.split(".", 1)
            ordered[name] = per_band[int(i_str[4:])][rest]
        else:
            ordered[name] = grads[name]
    gx = _bands_adjoint(cfg, band_input_grads) if want_input_grad else None
    return GradBundle(ModelParams(ordered), gx)


def backward(params: ModelParams, cfg: MasknetConfig, x, upstream_grad_wrt_y, want_input_grad: bool = False) -> GradBundle:
    """Exact gradient of ``sum(upstream * forward(x))`` for every parameter (and optionally ``x``)."""
    _, cache = forward(params, cfg, x, keep_cache=True)
    return backward_from_cache(params, cfg, cache, upstream_grad_wrt_y, want_input_grad)
