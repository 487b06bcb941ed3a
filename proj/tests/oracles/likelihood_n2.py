"""Independent high-precision evaluation of the smoothed log-likelihood for
small hand-checkable datasets. Values printed here are frozen in
tests/test_model.cpp."""
from mpmath import mp, mpf, exp, log, npdf, ncdf, quad, e

mp.dps = 40


def loglik(y, delta, z, xb, alpha, tau, eta, a):
    n = len(y)
    w = lambda s: 1 / (1 + exp(-(s - tau) / eta))
    R = []
    for yi, zi, bi in zip(y, z, xb):
        if alpha == 0 or zi == 0:
            R.append(log(yi) - bi)
        else:
            pts = [0, tau - 20 * eta, tau, tau + 20 * eta, yi]
            pts = sorted(p for p in set(pts) if 0 <= p <= yi)
            R.append(log(quad(lambda s: exp(-alpha * zi * w(s)), pts)) - bi)
    ta = -sum(d * (alpha * zi * w(yi) + bi) for d, zi, yi, bi in zip(delta, z, y, xb)) / n
    tb = -sum(d * r for d, r in zip(delta, R)) / n
    tc = sum(di * log(sum(dj * npdf((rj - ri) / a) for dj, rj in zip(delta, R)) / (n * a))
             for di, ri in zip(delta, R)) / n
    td = -sum(di * log(sum(ncdf((rj - ri) / a) for rj in R) / n) for di, ri in zip(delta, R)) / n
    return ta, tb, tc, td, ta + tb + tc + td


if __name__ == "__main__":
    # n = 2, both events, control arm, no covariates, y = (1, e), a = 1.
    print("n2", [mp.nstr(v, 17) for v in loglik([mpf(1), e], [1, 1], [0, 0], [0, 0], 0, 1, mpf("0.01"), 1)])
    # Mixed case with treatment, censoring and a covariate.
    y = [mpf("0.7"), mpf("1.9"), mpf("2.6"), mpf("3.4"), mpf("1.2")]
    d = [1, 0, 1, 1, 1]
    z = [1, 1, 0, 1, 0]
    x = [mpf("0.3"), mpf("-0.2"), mpf("1.1"), mpf("0.5"), mpf("-0.7")]
    beta = mpf("0.4")
    print("mixed", [mp.nstr(v, 17) for v in loglik(y, d, z, [beta * xi for xi in x], mpf("0.8"), mpf("1.5"), mpf("0.01"), mpf("0.6"))])
    # Smoothed residual near the lag: z=1, y = tau + 0.005, alpha = 1.
    w = lambda s: 1 / (1 + exp(-(s - 2) / mpf("0.01")))
    print("near", mp.nstr(log(quad(lambda s: exp(-w(s)), [0, mpf("1.8"), 2, mpf("2.005")])), 17))
