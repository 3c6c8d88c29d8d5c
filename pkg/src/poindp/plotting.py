"""Static SVG artifacts: the disk noise map and noise-magnitude CDFs.

Plain SVG text is emitted directly (circles, a colour bar, axis lines);
there is no plotting dependency. Colours follow a blue-to-red ramp over
the value range, so a zero-noise run renders a uniform disk.
"""

import numpy as np


def _ramp(t):
    """Blue (low) to red (high) through grey."""
    t = min(1.0, max(0.0, t))
    r = int(40 + 215 * t)
    g = int(60 + 60 * (1 - abs(2 * t - 1)))
    b = int(255 - 215 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def disk_noise_map_svg(points, magnitudes, size=640):
    """Poincare-disk scatter coloured by per-node noise magnitude.

    ``points`` are 2D ball coordinates; ``magnitudes`` one value per node.
    """
    points = np.asarray(points, dtype=np.float64)
    mags = np.asarray(magnitudes, dtype=np.float64)
    if points.shape[1] != 2:
        raise ValueError("disk map needs 2D embedding coordinates")
    if points.shape[0] != mags.shape[0]:
        raise ValueError("one magnitude per node required")
    lo, hi = float(mags.min()), float(mags.max())
    span = hi - lo
    cx = size / 2
    radius = size / 2 - 20

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 90}" height="{size}">',
        f'<circle cx="{cx}" cy="{cx}" r="{radius}" fill="none" '
        'stroke="#444" stroke-width="1.5"/>',
    ]
    for (x, y), m in zip(points, mags):
        t = 0.5 if span <= 0 else (m - lo) / span
        px = cx + x * radius
        py = cx - y * radius
        out.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="{_ramp(t)}" '
            'stroke="#222" stroke-width="0.4"/>'
        )
    # colour bar legend
    bar_x = size + 20
    steps = 24
    bar_h = size - 80
    for i in range(steps):
        t = 1.0 - i / (steps - 1)
        y = 40 + i * bar_h / steps
        out.append(
            f'<rect x="{bar_x}" y="{y:.1f}" width="18" height="{bar_h / steps + 0.5:.1f}" '
            f'fill="{_ramp(t)}"/>'
        )
    out.append(
        f'<text x="{bar_x + 24}" y="48" font-size="12" font-family="sans-serif">'
        f"{hi:.3g}</text>"
    )
    out.append(
        f'<text x="{bar_x + 24}" y="{40 + bar_h}" font-size="12" '
        f'font-family="sans-serif">{lo:.3g}</text>'
    )
    out.append(
        f'<text x="{bar_x}" y="24" font-size="12" font-family="sans-serif">noise</text>'
    )
    out.append("</svg>")
    return "\n".join(out)


def cdf_points(values):
    """Empirical CDF support points; the last cumulative value is 1.0."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    if n == 0:
        raise ValueError("empty value list")
    return v, np.arange(1, n + 1) / n


def cdf_svg(curves, width=640, height=420, x_label="perturbation magnitude"):
    """Cumulative-distribution plot for named magnitude collections.

    ``curves`` maps label -> 1D array of per-node magnitudes.
    """
    palette = ["#c03028", "#2860c0", "#2e8b57", "#b8860b", "#7b3fa0", "#444444"]
    pad = 50
    xmax = max(float(np.max(v)) if len(v) else 0.0 for v in curves.values())
    xmax = xmax if xmax > 0 else 1.0

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - 10}" y2="{height - pad}" '
        'stroke="#222"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{pad}" y2="10" stroke="#222"/>',
        f'<text x="{width // 2 - 60}" y="{height - 12}" font-size="12" '
        f'font-family="sans-serif">{x_label}</text>',
        f'<text x="12" y="{height // 2}" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 12 {height // 2})">cumulative</text>',
    ]
    for i, (label, values) in enumerate(curves.items()):
        xs, ys = cdf_points(values)
        pts = [f"{pad:.1f},{height - pad:.1f}"]
        for x, y in zip(xs, ys):
            px = pad + (x / xmax) * (width - pad - 20)
            py = height - pad - y * (height - pad - 20)
            pts.append(f"{px:.1f},{py:.1f}")
        colour = palette[i % len(palette)]
        out.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{colour}" '
            'stroke-width="1.8"/>'
        )
        out.append(
            f'<text x="{width - 170}" y="{24 + 16 * i}" font-size="12" '
            f'font-family="sans-serif" fill="{colour}">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out)


def write_cdf_csv(path, curves):
    """Long-form CSV of the CDF support points."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("arm,magnitude,cumulative\n")
        for label, values in curves.items():
            xs, ys = cdf_points(values)
            for x, y in zip(xs, ys):
                fh.write(f"{label},{x!r},{y!r}\n")
