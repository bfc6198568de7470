"""Single-response partial least squares (NIPALS)."""
import numpy as np


class PLSDegenerateError(ValueError):
    pass


def pls_fit(X, q, n_components: int = 8):
    """Fit q ~ X by PLS1 and return (x_mean, beta).

    Components are extracted one at a time: the weight vector is the
    normalised covariance between the deflated X and the residual response,
    after which both are deflated by the resulting score. With as many
    components as the rank of X, beta equals the ordinary least-squares
    slope of the centred problem.
    """
    X = np.asarray(X, dtype=float)
    q = np.asarray(q, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != q.shape[0]:
        raise ValueError("X must be (n, p) with one label per row")
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if len(np.unique(q)) < 2:
        raise PLSDegenerateError("labels must take both values")
    x_mean = X.mean(axis=0)
    Xk = X - x_mean
    if not np.any(Xk):
        raise PLSDegenerateError("X has zero variance")
    yk = q - q.mean()
    W, P, c = [], [], []
    for _ in range(n_components):
        w = Xk.T @ yk
        norm = np.linalg.norm(w)
        if norm < 1e-12:
            break
        w /= norm
        t = Xk @ w
        tt = t @ t
        if tt < 1e-12:
            break
        p = Xk.T @ t / tt
        ca = (yk @ t) / tt
        Xk -= np.outer(t, p)
        yk = yk - ca * t
        W.append(w)
        P.append(p)
        c.append(ca)
    W = np.array(W).T
    P = np.array(P).T
    beta = W @ np.linalg.solve(P.T @ W, np.array(c))
    return x_mean, beta
