"""Synthetic benchmark scenes: a textured object sweeping over gray panels.

Each scene is a radiance sequence (photoelectron rates) containing the
region archetypes the pipeline's reliability arguments rest on: a dark
smooth panel (image noisy, no events), a bright smooth panel (image clean,
only BA events), a static textured panel (image texture, no motion), and
the band swept by a moving textured bar (dense signal events).
"""

from __future__ import annotations

import numpy as np

from .sensor import RadianceSequence

DEFAULT_PANEL_LEVELS = {
    "dark_smooth": 0.5,      # electrons
    "mid_textured": 4.0,
    "bright_textured": 20.0,
    "dark_textured": 1.5,
}


def make_scene(
    seed: int,
    width: int = 64,
    height: int = 64,
    num_frames: int = 25,
    duration_ns: int = 40_000_000,
    bar_level: float = 3.0,
    bar_width: float = 8.0,
    bar_texture_range: tuple[float, float] = (0.3, 2.3),
    checker_contrast: float = 0.6,
    bright_texture_contrast: float = 0.6,
    panel_levels: dict | None = None,
):
    """Radiance sequence plus region masks and the analysis window.

    A textured bar sweeps left to right across the top half only; the
    bottom panels never see signal events.  Both bottom panels carry static
    texture (a dark checker and a bright block pattern), which only the
    frame sensor can resolve; the moving band's texture is what only the
    events resolve under heavy noise.  The returned window covers the
    middle third of the sweep, so the motion band sits in a known central
    column range.
    """
    rng = np.random.default_rng(seed)
    h, w = height, width
    levels = dict(DEFAULT_PANEL_LEVELS)
    if panel_levels:
        levels.update(panel_levels)

    base = np.empty((h, w))
    half_h, half_w = h // 2, w // 2
    base[:half_h, :half_w] = levels["dark_smooth"]
    # Static textures everywhere except the dark smooth panel (no motion in
    # any of them; only the frame sensor can resolve these).
    mid_blocks = rng.uniform(-1.0, 1.0, size=(half_h // 2 + 1, (w - half_w) // 2 + 1))
    mid_tex = np.kron(mid_blocks, np.ones((2, 2)))[:half_h, : w - half_w]
    base[:half_h, half_w:] = levels["mid_textured"] * (1.0 + 0.3 * mid_tex)
    checker = np.indices((h - half_h, half_w)).sum(axis=0) % 2
    base[half_h:, :half_w] = levels["dark_textured"] * (
        1.0 + checker_contrast * (2.0 * checker - 1.0)
    )
    blocks = rng.uniform(-1.0, 1.0, size=((h - half_h) // 2 + 1, (w - half_w) // 2 + 1))
    block_tex = np.kron(blocks, np.ones((2, 2)))[: h - half_h, : w - half_w]
    base[half_h:, half_w:] = levels["bright_textured"] * (
        1.0 + bright_texture_contrast * block_tex
    )

    # Multiplicative texture columns carried by the bar, block size 2 px.
    n_cols = int(np.ceil(bar_width)) + 2
    tex_blocks = rng.uniform(*bar_texture_range, size=(half_h // 2 + 1, n_cols // 2 + 1))
    bar_texture = np.kron(tex_blocks, np.ones((2, 2)))[:half_h, :n_cols]

    ts = np.linspace(0.0, 1.0, num_frames)
    frames = np.empty((num_frames, h, w))
    travel = w + bar_width
    cols = np.arange(w, dtype=np.float64)
    for i, t in enumerate(ts):
        lead = t * travel  # leading-edge position
        # Per-column coverage of the bar, linear at both edges.
        cov = np.clip(lead - cols, 0.0, 1.0) - np.clip(lead - bar_width - cols, 0.0, 1.0)
        frame = base.copy()
        inside = cov > 0
        if np.any(inside):
            idx = np.nonzero(inside)[0]
            tex_col = np.clip((lead - cols[idx]).astype(int), 0, n_cols - 1)
            bar_vals = bar_level * bar_texture[:, tex_col]
            frame[:half_h, idx] = (
                (1 - cov[idx])[None, :] * base[:half_h, idx]
                + cov[idx][None, :] * bar_vals
            )
        frames[i] = frame

    frame_times = np.round(ts * duration_ns).astype(np.int64)
    radiance = RadianceSequence(frame_times=frame_times, frames=frames)

    # Analysis window: middle third of the sweep.
    k0 = (num_frames - 1) // 3
    k1 = (2 * (num_frames - 1)) // 3
    window = (int(frame_times[k0]), int(frame_times[k1]) + 1)
    band_lo = max(int(ts[k0] * travel - bar_width), 0)
    band_hi = min(int(ts[k1] * travel) + 1, w)

    masks = {}
    yy, xx = np.indices((h, w))
    in_band = (yy < half_h) & (xx >= band_lo) & (xx < band_hi)
    masks["motion_band"] = in_band
    masks["dark_smooth"] = (yy < half_h) & (xx < half_w) & ~in_band
    masks["mid_textured"] = (yy < half_h) & (xx >= half_w) & ~in_band
    masks["dark_textured"] = (yy >= half_h) & (xx < half_w)
    masks["bright_textured"] = (yy >= half_h) & (xx >= half_w)

    return radiance, masks, {"window": window, "prev_frame": k0, "cur_frame": k1}


def gray_card_scene(
    levels,
    width_per_panel: int = 16,
    height: int = 32,
    num_frames: int = 2,
    duration_ns: int = 1_000_000_000,
):
    """Static card of uniform panels; only BA events can occur on it."""
    levels = np.asarray(levels, dtype=np.float64)
    w = width_per_panel * len(levels)
    base = np.repeat(levels, width_per_panel)[None, :] * np.ones((height, 1))
    frames = np.stack([base] * num_frames)
    frame_times = np.linspace(0, duration_ns, num_frames).astype(np.int64)
    masks = {
        f"panel_{i}": np.pad(
            np.ones((height, width_per_panel), bool),
            ((0, 0), (i * width_per_panel, w - (i + 1) * width_per_panel)),
        )
        for i in range(len(levels))
    }
    return RadianceSequence(frame_times=frame_times, frames=frames), masks
