"""Regenerates diag_draws.csv and diag_expected.csv with ArviZ as the reference.

python3 make_diag_fixture.py   (needs numpy and arviz)
"""
import numpy as np
import arviz as az

rng = np.random.default_rng(20201130)
chains, draws = 4, 300


def ar1(phi, shape):
    x = np.zeros(shape)
    x[:, 0] = rng.normal(size=shape[0]) / np.sqrt(1 - phi**2)
    for i in range(1, shape[1]):
        x[:, i] = phi * x[:, i - 1] + rng.normal(size=shape[0])
    return x


params = {
    "iid": rng.normal(size=(chains, draws)),
    "ar09": ar1(0.9, (chains, draws)),
    "shifted": rng.normal(size=(chains, draws)) + np.array([0, 0, 0, 1.5])[:, None],
    "heavy": rng.standard_t(2, size=(chains, draws)),
    "ties": rng.poisson(2.0, size=(chains, draws)).astype(float),
    "trend": rng.normal(size=(chains, draws)) + np.linspace(0, 2, draws)[None, :],
}

with open("diag_draws.csv", "w") as f:
    f.write("# format=nowcast-draws/1\n# latent=\n")
    f.write("chain,iter,param,value\n")
    for c in range(chains):
        for i in range(draws):
            for name, x in params.items():
                f.write(f"{c},{i},{name},{float(x[c, i])!r}\n")

with open("diag_expected.csv", "w") as f:
    f.write("param,r_hat,ess_bulk,ess_tail\n")
    for name, x in params.items():
        r = az.rhat(x, method="z_scale")
        b = az.ess(x, method="bulk")
        t = az.ess(x, method="tail")
        f.write(f"{name},{float(r)!r},{float(b)!r},{float(t)!r}\n")
