"""Local dependence of the bivariate t.

Tabulates gamma_12 for nu = 6 and rho in {0.7, -0.7, 0.5, -0.5}, prints a
coarse text picture of each grid and, if matplotlib is installed, saves the
four contour panels to ``ldf_contours.png``.

    python3 notebooks/ldf_contours.py
"""

import numpy as np

from tgpm import TStudentParams, ldf_grid, ldf_t_exact

NU = 6.0
RHOS = (0.7, -0.7, 0.5, -0.5)

grids = {rho: ldf_grid(TStudentParams.bivariate(rho, NU), axes=((-4, 4, 81), (-4, 4, 81))) for rho in RHOS}

# Dependence is strongest at the centre, where the LDF is -(nu+d)/nu * Sigma^{-1}.
for rho, g in grids.items():
    centre = g.values[40, 40]
    closed = ldf_t_exact([0.0, 0.0], TStudentParams.bivariate(rho, NU))[0, 1]
    print(f"rho={rho:+.1f}  centre gamma_12={centre:+.4f}  closed form={closed:+.4f}  "
          f"range=[{g.values.min():+.3f}, {g.values.max():+.3f}]")

# Along the diagonal the sign follows rho; far from the centre it can flip.
g = grids[0.7]
print("\nrho=+0.7, gamma_12 on x1 = x2:")
for i in range(0, 81, 10):
    print(f"  x={g.x_values[i]:+.1f}  {g.values[i, i]:+.4f}")
print("rho=+0.7, gamma_12 on the x1 axis (x2 = 0):")
for i in range(40, 81, 10):
    print(f"  x1={g.x_values[i]:+.1f}  {g.values[i, 40]:+.4f}")

# Text sketch: + positive, - negative, . near zero.
print("\nsign map, rho=+0.7 (x1 left to right, x2 bottom to top):")
for j in range(80, -1, -8):
    row = g.values[::8, j]
    print("  " + "".join("+" if v > 0.05 else "-" if v < -0.05 else "." for v in row))

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not installed; skipping the figure")
else:
    fig, axes = plt.subplots(2, 2, figsize=(9, 8), sharex=True, sharey=True)
    for ax, (rho, g) in zip(axes.ravel(), grids.items()):
        X, Y = np.meshgrid(g.x_values, g.y_values, indexing="ij")
        cs = ax.contour(X, Y, g.values, levels=15, cmap="RdBu_r")
        ax.clabel(cs, fontsize=6)
        ax.set_title(f"nu={NU:g}, rho={rho:+.1f}")
    fig.tight_layout()
    fig.savefig("ldf_contours.png", dpi=120)
    print("\nwrote ldf_contours.png")
