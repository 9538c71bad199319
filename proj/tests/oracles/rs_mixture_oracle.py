# Independent reference values for the scalar channel / RS fixed point of a
# two-component Gaussian mean mixture, by adaptive 2-D quadrature (scipy).
import numpy as np
from scipy import integrate, optimize, stats

P = np.array([0.5, 0.5])
VAR = np.array([1.0, 0.25])
NGL = 600


def post(y, a, w):
    y = y[..., None]
    s2 = VAR + 1.0 / w
    lp = np.log(P) + stats.norm.logpdf(y, a, np.sqrt(s2))
    m = lp.max(axis=-1, keepdims=True)
    r = np.exp(lp - m)
    z = r.sum(axis=-1, keepdims=True)
    r /= z
    v = 1.0 / (1.0 / VAR + w)
    mk = (a / VAR + w * y) * v
    mean = (r * mk).sum(-1)
    var = (r * (v + (mk - mean[..., None]) ** 2)).sum(-1)
    return mean, var, (m + np.log(z))[..., 0]


def expect(f, astar, ws):
    x, wt = np.polynomial.legendre.leggauss(NGL)
    tot = 0.0
    for pj, cj, vj in zip(P, astar, VAR):
        th = cj + 12 * np.sqrt(vj) * x
        z = 12 * x
        TH, Z = np.meshgrid(th, z, indexing="ij")
        W = np.outer(wt * 12 * np.sqrt(vj) * stats.norm.pdf(th, cj, np.sqrt(vj)), wt * 12 * stats.norm.pdf(z))
        tot += pj * (W * f(TH, TH + Z / np.sqrt(ws))).sum()
    return tot


def fixed_point(a, astar, delta, sigma2):
    def F(x):
        mse, mses = x
        w, ws = delta / (sigma2 + mse), delta / (sigma2 + mses)
        e1 = expect(lambda th, y: post(y, a, w)[1], astar, ws)
        e2 = expect(lambda th, y: (th - post(y, a, w)[0]) ** 2, astar, ws)
        return [e1 - mse, e2 - mses]
    sol = optimize.fsolve(F, [0.5, 0.6], xtol=1e-13)
    mse, mses = sol
    w, ws = delta / (sigma2 + mse), delta / (sigma2 + mses)
    nlm = -expect(lambda th, y: post(y, a, w)[2], astar, ws)
    r = w / ws
    Fv = nlm - 0.5 * (delta + np.log(2 * np.pi / w) - delta * np.log(2 * np.pi * delta / w)
                      + (1 - delta) * r + w * sigma2 * (r - 2))
    vsq = expect(lambda th, y: post(y, a, w)[1] ** 2, astar, ws)
    at = 1 - w * w / delta * vsq
    return mse, mses, w, ws, Fv, at


if __name__ == "__main__":
    import sys
    if len(sys.argv) > 1:
        NGL = int(sys.argv[1])
    astar = np.array([-1.0, 1.0])
    for a in (np.array([-1.0, 1.0]), np.array([-0.5, 1.5])):
        print(a, ["%.12f" % v for v in fixed_point(a, astar, 1.0, 0.25)])
