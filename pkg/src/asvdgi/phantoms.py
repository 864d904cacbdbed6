"""Synthetic test objects: block text, square arrays, a square with a circle, disks."""

from __future__ import annotations

import numpy as np

# 5x7 bitmap glyphs, '#' = on
_GLYPHS = {
    "A": [" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"],
    "B": ["#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "],
    "C": [" ####", "#    ", "#    ", "#    ", "#    ", "#    ", " ####"],
    "D": ["#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "],
    "E": ["#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"],
    "G": [" ####", "#    ", "#    ", "#  ##", "#   #", "#   #", " ####"],
    "H": ["#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"],
    "I": ["#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "#####"],
    "M": ["#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"],
    "N": ["#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #"],
    "O": [" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "],
    "P": ["#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "],
    "S": [" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "],
    "T": ["#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "],
    "U": ["#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "],
    "Y": ["#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "],
    " ": ["     "] * 7,
}


def text_object(text: str = "BUAA", N: int = 128, scale=None,
                origin=None) -> np.ndarray:
    """Binary N x N image of ``text`` in a 5x7 block font magnified by ``scale``.

    ``scale`` defaults to the largest magnification leaving a 4-pixel margin.
    ``origin`` is the (row, col) of the top-left glyph corner; by default the
    text is centred.
    """
    cols = []
    for i, ch in enumerate(text.upper()):
        if ch not in _GLYPHS:
            raise ValueError(f"no glyph for {ch!r}")
        glyph = np.array([[c == "#" for c in line] for line in _GLYPHS[ch]])
        cols.append(glyph)
        if i < len(text) - 1:
            cols.append(np.zeros((7, 1), dtype=bool))
    bitmap = np.hstack(cols)
    if scale is None:
        scale = max(1, (N - 8) // bitmap.shape[1])
    big = np.kron(bitmap, np.ones((scale, scale), dtype=bool))
    h, w = big.shape
    if h > N or w > N:
        raise ValueError(f"text needs {h}x{w} pixels, scene is {N}x{N}")
    if origin is None:
        origin = ((N - h) // 2, (N - w) // 2)
    r, c = origin
    img = np.zeros((N, N))
    img[r:r + h, c:c + w] = big
    return img


def squares_object(N: int = 128) -> np.ndarray:
    """Rows of squares whose size and spacing shrink from top to bottom."""
    img = np.zeros((N, N))
    row = N // 10
    for size, gap in ((12, 8), (8, 6), (5, 4), (3, 2), (2, 1)):
        col = N // 10
        while col + size <= N - N // 10 and row + size <= N:
            img[row:row + size, col:col + size] = 1.0
            col += size + gap
        row += size + max(gap, 6)
    return img


def square_and_circle(N: int = 128, side=None, radius=None,
                      square_at=None, circle_at=None) -> np.ndarray:
    """Binary filled square plus a filled disk; geometry defaults scale with N."""
    f = N / 128
    side = round(43 * f) if side is None else side
    radius = 22.5 * f if radius is None else radius
    square_at = (round(13 * f), round(13 * f)) if square_at is None else square_at
    circle_at = (84.5 * f, 84.5 * f) if circle_at is None else circle_at
    img = np.zeros((N, N))
    r, c = square_at
    img[r:r + side, c:c + side] = 1.0
    yy, xx = np.mgrid[0:N, 0:N]
    cy, cx = circle_at
    img[(yy + 0.5 - cy) ** 2 + (xx + 0.5 - cx) ** 2 <= radius ** 2] = 1.0
    return img


def disk(N: int = 64, radius: float = 20.0, center=None) -> np.ndarray:
    yy, xx = np.mgrid[0:N, 0:N]
    cy, cx = center if center is not None else (N / 2, N / 2)
    return ((yy + 0.5 - cy) ** 2 + (xx + 0.5 - cx) ** 2 <= radius ** 2).astype(float)


def blurred_disk(N: int = 16, radius: float = 5.0, width: float = 1.5) -> np.ndarray:
    """Disk with a smooth (logistic) rim, values in [0, 1]."""
    yy, xx = np.mgrid[0:N, 0:N]
    r = np.hypot(yy + 0.5 - N / 2, xx + 0.5 - N / 2)
    return 1.0 / (1.0 + np.exp((r - radius) / (width / 4)))


PHANTOMS = {
    "text": text_object,
    "squares": squares_object,
    "square-circle": square_and_circle,
    "disk": disk,
}


def make_phantom(name: str, N: int) -> np.ndarray:
    try:
        fn = PHANTOMS[name]
    except KeyError:
        raise ValueError(f"unknown phantom {name!r}; choose from {sorted(PHANTOMS)}") from None
    return fn(N=N)
