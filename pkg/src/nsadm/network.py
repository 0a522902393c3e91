"""Compact convolutional denoiser with hand-written exact backpropagation.

Plain numpy throughout: forward passes build im2col patch tensors and run
them through BLAS matrix products; backward passes are the exact adjoints
(nine slice-adds for the convolution input gradient, explicit padding
adjoints, closed-form group-norm backward). Keeping the whole network in
numpy makes every layer unit-checkable against central finite differences
in double precision and keeps checkpoints dependency-free.

Channel order of the denoiser input (fixed, tested by fixture):
    0: diffusion state (normalized distances)
    1: observed degraded grid (normalized, zero where unobserved)
    2: observed-cell mask (0/1)
    3: per-cell detection probability
    4: trace-normalized variance map
    5..12: sinusoidal step embedding, sin/cos of 2 pi f t/T for f in 1,2,4,8

The network predicts a residual correction added to the state channel, and
its final convolution is zero-initialized, so an untrained network is the
identity on the state.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import TAG_FEATURES, TAG_NET_INIT, stream

N_EMBED = 8
N_CHANNELS = 5 + N_EMBED
PAD_MODES = ("reflect", "wrap", "constant")


def _pad(x, mode):
    """Pad the two trailing axes by one pixel."""
    widths = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    if mode == "constant":
        return np.pad(x, widths, mode="constant")
    return np.pad(x, widths, mode=mode)


def _pad_adjoint(gp, mode):
    """Fold the gradient of a padded tensor back onto the unpadded one."""
    core = gp[..., 1:-1, 1:-1].copy()
    if mode == "constant":
        return core
    if mode == "wrap":
        core[..., 0, :] += gp[..., -1, 1:-1]
        core[..., -1, :] += gp[..., 0, 1:-1]
        core[..., :, 0] += gp[..., 1:-1, -1]
        core[..., :, -1] += gp[..., 1:-1, 0]
        core[..., 0, 0] += gp[..., -1, -1]
        core[..., 0, -1] += gp[..., -1, 0]
        core[..., -1, 0] += gp[..., 0, -1]
        core[..., -1, -1] += gp[..., 0, 0]
        return core
    # reflect: pad row 0 mirrors interior row 1, etc.
    core[..., 1, :] += gp[..., 0, 1:-1]
    core[..., -2, :] += gp[..., -1, 1:-1]
    core[..., :, 1] += gp[..., 1:-1, 0]
    core[..., :, -2] += gp[..., 1:-1, -1]
    core[..., 1, 1] += gp[..., 0, 0]
    core[..., 1, -2] += gp[..., 0, -1]
    core[..., -2, 1] += gp[..., -1, 0]
    core[..., -2, -2] += gp[..., -1, -1]
    return core


class Conv2d:
    """3x3 (or 1x1) convolution, optional stride 2, same-size padding."""

    def __init__(self, cin, cout, ksize=3, stride=1, pad_mode="reflect",
                 rng=None, zero_init=False, dtype=np.float32):
        if pad_mode not in PAD_MODES:
            raise ValueError(f"unknown pad mode {pad_mode!r}")
        if ksize not in (1, 3):
            raise ValueError("only 1x1 and 3x3 kernels are used here")
        self.cin, self.cout, self.ksize, self.stride = cin, cout, ksize, stride
        self.pad_mode = pad_mode
        fan_in = cin * ksize * ksize
        if zero_init:
            w = np.zeros((cout, cin, ksize, ksize))
        else:
            w = rng.standard_normal((cout, cin, ksize, ksize)) * np.sqrt(2.0 / fan_in)
        self.w = w.astype(dtype)
        self.b = np.zeros(cout, dtype=dtype)
        self.gw = None
        self.gb = None
        self._cache = None

    def forward(self, x):
        b, c, h, w = x.shape
        if c != self.cin:
            raise ValueError(f"expected {self.cin} channels, got {c}")
        if self.ksize == 3:
            xp = _pad(x, self.pad_mode)
        else:
            xp = x
        k, s = self.ksize, self.stride
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        ho, wo = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho, wo, c * k * k)
        wm = self.w.reshape(self.cout, c * k * k)
        y = cols @ wm.T + self.b
        self._cache = (cols, x.shape)
        return y.transpose(0, 3, 1, 2)

    def backward(self, gy):
        cols, xshape = self._cache
        b, c, h, w = xshape
        k, s = self.ksize, self.stride
        ho, wo = gy.shape[2], gy.shape[3]
        g = gy.transpose(0, 2, 3, 1)
        self.gb = g.sum(axis=(0, 1, 2))
        flat_g = g.reshape(-1, self.cout)
        flat_cols = cols.reshape(-1, c * k * k)
        self.gw = (flat_g.T @ flat_cols).reshape(self.w.shape)
        gcols = (g @ self.w.reshape(self.cout, -1)).reshape(b, ho, wo, c, k, k)
        gcols = gcols.transpose(0, 3, 1, 2, 4, 5)
        hp = h + 2 if k == 3 else h
        wp = w + 2 if k == 3 else w
        gxp = np.zeros((b, c, hp, wp), dtype=gy.dtype)
        for di in range(k):
            for dj in range(k):
                gxp[:, :, di:di + s * ho:s, dj:dj + s * wo:s] += gcols[:, :, :, :, di, dj]
        if k == 3:
            return _pad_adjoint(gxp, self.pad_mode)
        return gxp

    def params(self):
        return [("w", self), ("b", self)]


class GroupNorm:
    """Group normalization over channel groups, per sample."""

    def __init__(self, channels, groups=8, eps=1e-5, dtype=np.float32):
        if channels % groups != 0:
            raise ValueError("channels must divide into groups")
        self.channels, self.groups, self.eps = channels, groups, eps
        self.w = np.ones(channels, dtype=dtype)   # per-channel scale
        self.b = np.zeros(channels, dtype=dtype)  # per-channel shift
        self.gw = None
        self.gb = None
        self._cache = None

    def forward(self, x):
        b, c, h, w = x.shape
        g = self.groups
        xg = x.reshape(b, g, c // g, h, w)
        mu = xg.mean(axis=(2, 3, 4), keepdims=True)
        var = xg.var(axis=(2, 3, 4), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (xg - mu) * inv
        y = xhat.reshape(b, c, h, w) * self.w[None, :, None, None] + self.b[None, :, None, None]
        self._cache = (xhat, inv, x.shape)
        return y

    def backward(self, gy):
        xhat, inv, xshape = self._cache
        b, c, h, w = xshape
        g = self.groups
        self.gw = (gy * xhat.reshape(b, c, h, w)).sum(axis=(0, 2, 3))
        self.gb = gy.sum(axis=(0, 2, 3))
        gxhat = (gy * self.w[None, :, None, None]).reshape(b, g, c // g, h, w)
        m = (c // g) * h * w
        dot = (gxhat * xhat).mean(axis=(2, 3, 4), keepdims=True)
        mean_g = gxhat.mean(axis=(2, 3, 4), keepdims=True)
        gx = inv * (gxhat - mean_g - xhat * dot)
        return gx.reshape(b, c, h, w)

    def params(self):
        return [("w", self), ("b", self)]


class SiLU:
    """x * sigmoid(x) activation."""

    def __init__(self):
        self._cache = None

    def forward(self, x):
        sig = 1.0 / (1.0 + np.exp(-x))
        self._cache = (x, sig)
        return x * sig

    def backward(self, gy):
        x, sig = self._cache
        return gy * sig * (1.0 + x * (1.0 - sig))

    def params(self):
        return []


def upsample_nearest(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample_nearest_adjoint(gy):
    b, c, h, w = gy.shape
    return gy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class ConvBlock:
    """Conv -> GroupNorm -> SiLU."""

    def __init__(self, cin, cout, stride=1, pad_mode="reflect", rng=None, dtype=np.float32):
        self.conv = Conv2d(cin, cout, 3, stride, pad_mode, rng, dtype=dtype)
        self.norm = GroupNorm(cout, dtype=dtype)
        self.act = SiLU()

    def forward(self, x):
        return self.act.forward(self.norm.forward(self.conv.forward(x)))

    def backward(self, gy):
        return self.conv.backward(self.norm.backward(self.act.backward(gy)))

    def params(self):
        return self.conv.params() + self.norm.params()


class DenoiserNet:
    """Three-level encoder-decoder with skip connections, residual output.

    Spatial sizes must be multiples of 4 (two stride-2 stages).
    """

    def __init__(self, seed=0, pad_mode="reflect", dtype=np.float32):
        rng = stream(TAG_NET_INIT, seed)
        mk = lambda cin, cout, s=1: ConvBlock(cin, cout, s, pad_mode, rng, dtype)
        self.conv_in = mk(N_CHANNELS, 32)
        self.enc1 = mk(32, 32)
        self.down1 = mk(32, 64, s=2)
        self.enc2 = mk(64, 64)
        self.down2 = mk(64, 128, s=2)
        self.mid = mk(128, 128)
        self.up2_conv = mk(128, 64)
        self.dec2 = mk(128, 64)
        self.up1_conv = mk(64, 32)
        self.dec1 = mk(64, 32)
        self.conv_out = Conv2d(32, 1, 3, 1, pad_mode, zero_init=True, dtype=dtype)
        self._blocks = [
            ("conv_in", self.conv_in), ("enc1", self.enc1), ("down1", self.down1),
            ("enc2", self.enc2), ("down2", self.down2), ("mid", self.mid),
            ("up2_conv", self.up2_conv), ("dec2", self.dec2),
            ("up1_conv", self.up1_conv), ("dec1", self.dec1),
            ("conv_out", self.conv_out),
        ]

    def forward(self, x):
        """x: (B, N_CHANNELS, H, W) -> clean prediction (B, 1, H, W)."""
        b, c, h, w = x.shape
        if c != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} input channels, got {c}")
        if h % 4 or w % 4:
            raise ValueError("spatial size must be a multiple of 4")
        h0 = self.conv_in.forward(x)
        s1 = self.enc1.forward(h0)
        h1 = self.down1.forward(s1)
        s2 = self.enc2.forward(h1)
        h2 = self.down2.forward(s2)
        hm = self.mid.forward(h2)
        u2 = self.up2_conv.forward(upsample_nearest(hm))
        d2 = self.dec2.forward(np.concatenate([u2, s2], axis=1))
        u1 = self.up1_conv.forward(upsample_nearest(d2))
        d1 = self.dec1.forward(np.concatenate([u1, s1], axis=1))
        out = self.conv_out.forward(d1)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite network activations")
        return x[:, 0:1] + out

    def backward(self, gpred):
        """Accumulate parameter gradients for a forward pass just taken."""
        g = self.conv_out.backward(gpred)
        g = self.dec1.backward(g)
        g_u1, g_s1 = g[:, :32], g[:, 32:]
        g = self.up1_conv.backward(g_u1)
        g = self.dec2.backward(upsample_nearest_adjoint(g))
        g_u2, g_s2 = g[:, :64], g[:, 64:]
        g = self.up2_conv.backward(g_u2)
        g = self.mid.backward(upsample_nearest_adjoint(g))
        g = self.down2.backward(g)
        g = self.enc2.backward(g + g_s2)
        g = self.down1.backward(g)
        g = self.enc1.backward(g + g_s1)
        g = self.conv_in.backward(g)
        # the forward adds the state channel to the head output, so its
        # gradient carries the incoming gradient alongside the conv path
        g[:, 0:1] += gpred
        return g

    def named_params(self):
        for bname, block in self._blocks:
            for attr, layer in block.params():
                yield f"{bname}.{type(layer).__name__}.{attr}", layer, attr

    def param_count(self):
        return sum(getattr(layer, attr).size for _, layer, attr in self.named_params())

    def get_flat(self):
        return np.concatenate([getattr(layer, attr).ravel()
                               for _, layer, attr in self.named_params()])

    def set_flat(self, flat):
        pos = 0
        for _, layer, attr in self.named_params():
            cur = getattr(layer, attr)
            chunk = flat[pos:pos + cur.size].reshape(cur.shape).astype(cur.dtype)
            setattr(layer, attr, chunk)
            pos += cur.size
        if pos != flat.size:
            raise ValueError("flat parameter vector has wrong length")

    def grads_flat(self):
        return np.concatenate([getattr(layer, "g" + attr).ravel()
                               for _, layer, attr in self.named_params()])


def t_embedding(t, n_steps, shape, dtype=np.float64):
    """Sinusoidal step-embedding channels, constant over the grid."""
    phases = [2.0 * np.pi * f * t / n_steps for f in (1, 2, 4, 8)]
    vals = []
    for p in phases:
        vals.append(np.sin(p))
        vals.append(np.cos(p))
    emb = np.empty((N_EMBED,) + shape, dtype=dtype)
    for i, v in enumerate(vals):
        emb[i].fill(v)
    return emb


def build_denoiser_input(state, t, cond, n_steps, dtype=np.float64):
    """Assemble the fixed-order channel stack for one sample (no batch dim)."""
    shape = state.shape
    obs_norm = np.where(cond.observed_mask,
                        cond.observed_dm.values / cond.d_max, 0.0)
    chans = np.empty((N_CHANNELS,) + shape, dtype=dtype)
    chans[0] = state
    chans[1] = obs_norm
    chans[2] = cond.observed_mask.astype(dtype)
    chans[3] = cond.det_prob
    chans[4] = cond.norm_var
    chans[5:] = t_embedding(t, n_steps, shape, dtype)
    return chans


class FeatureExtractor:
    """Fixed random multi-scale features: three stride-2 tanh conv stages."""

    def __init__(self, seed=0, dtype=np.float64):
        rng = stream(TAG_FEATURES, seed)
        self.convs = [
            Conv2d(1, 16, 3, 2, "reflect", rng, dtype=dtype),
            Conv2d(16, 32, 3, 2, "reflect", rng, dtype=dtype),
            Conv2d(32, 64, 3, 2, "reflect", rng, dtype=dtype),
        ]

    def forward(self, x):
        """x: (B, 1, H, W) -> list of three feature tensors."""
        feats = []
        h = x
        caches = []
        for conv in self.convs:
            z = conv.forward(h)
            a = np.tanh(z)
            caches.append(a)
            feats.append(a)
            h = a
        self._caches = caches
        return feats

    def backward_input(self, gfeats):
        """Gradient w.r.t. x of sum_i <gfeats[i], feats[i]>."""
        g = None
        for conv, a, gf in zip(reversed(self.convs),
                               reversed(self._caches), reversed(gfeats)):
            gz = (gf if g is None else gf + g) * (1.0 - a * a)
            g = conv.backward(gz)
        return g


def hybrid_loss(pred, target, fx: FeatureExtractor, lam: float):
    """Mean-squared error plus weighted multi-scale feature discrepancy.

    pred, target: (H, W) grids. Returns (scalar loss, gradient w.r.t. pred).
    The feature term averages the per-stage mean squared differences.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    diff = pred - target
    n = diff.size
    loss = float(np.mean(diff**2))
    grad = (2.0 / n) * diff
    if lam > 0.0:
        ft = [a.copy() for a in fx.forward(target[None, None, :, :])]
        # run pred last so the extractor caches belong to the pred pass
        fp = fx.forward(pred[None, None, :, :])
        stages = len(fp)
        gfeats = []
        for a, b in zip(fp, ft):
            d = a - b
            loss += lam * float(np.mean(d**2)) / stages
            gfeats.append((2.0 * lam / (stages * d.size)) * d)
        gx = fx.backward_input(gfeats)
        grad = grad + gx[0, 0]
    return loss, grad
