"""Small dense-network numerics on float64 numpy arrays.

Three parameter groups share one feature trunk: a softmax classifier head,
a sigmoid critic head, and the feature extractor itself. Every gradient is
derived by hand and checked against central finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_CLAMP = 1e-12

GROUP_NAMES = ("feature", "classifier", "critic")


@dataclass
class ParamGroup:
    """A stack of fully connected layers, weights shaped [out, in]."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def clone(self) -> "ParamGroup":
        return ParamGroup([(W.copy(), b.copy()) for W, b in self.layers])


@dataclass
class NetworkParams:
    feature: ParamGroup
    classifier: ParamGroup
    critic: ParamGroup

    def group(self, name: str) -> ParamGroup:
        return getattr(self, name)

    def clone(self) -> "NetworkParams":
        return NetworkParams(self.feature.clone(), self.classifier.clone(),
                             self.critic.clone())


# Gradients share the container; same tree shape as the parameters.
Gradients = NetworkParams


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths per group; head input widths must equal feature[-1]."""

    feature: tuple[int, ...]
    classifier: tuple[int, ...]
    critic: tuple[int, ...]

    def __post_init__(self):
        for name in GROUP_NAMES:
            widths = getattr(self, name)
            if len(widths) < 2:
                raise ValueError(f"LayerSpec.{name}: need at least two widths, got {widths}")
            if any(int(w) <= 0 for w in widths):
                raise ValueError(f"LayerSpec.{name}: widths must be positive, got {widths}")
        if self.classifier[0] != self.feature[-1] or self.critic[0] != self.feature[-1]:
            raise ValueError(
                f"LayerSpec: head input widths {self.classifier[0]}/{self.critic[0]} "
                f"must equal feature output width {self.feature[-1]}")
        if self.classifier[-1] < 2:
            raise ValueError("LayerSpec: classifier needs at least 2 output classes")
        if self.critic[-1] != 1:
            raise ValueError(f"LayerSpec: critic output width must be 1, got {self.critic[-1]}")

    @property
    def n_classes(self) -> int:
        return self.classifier[-1]

    @property
    def input_dim(self) -> int:
        return self.feature[0]


def _init_group(widths, rng: np.random.Generator) -> ParamGroup:
    # He-uniform fan-in scaling, zero biases.
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / fan_in)
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append((W, np.zeros(fan_out)))
    return ParamGroup(layers)


def init_params(spec: LayerSpec, seed: int) -> NetworkParams:
    """Seeded He-uniform weights and zero biases for all three groups."""
    rng = np.random.default_rng(seed)
    return NetworkParams(
        feature=_init_group(spec.feature, rng),
        classifier=_init_group(spec.classifier, rng),
        critic=_init_group(spec.critic, rng),
    )


def zeros_like_params(params: NetworkParams) -> Gradients:
    def z(group):
        return ParamGroup([(np.zeros_like(W), np.zeros_like(b)) for W, b in group.layers])
    return NetworkParams(z(params.feature), z(params.classifier), z(params.critic))


def _check_input(op: str, params: NetworkParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{op}: expected 2-d input, got shape {X.shape}")
    d = params.feature.layers[0][0].shape[1]
    if X.shape[1] != d:
        raise ValueError(f"{op}: input has {X.shape[1]} columns, network expects {d}")
    return X


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _feature_forward(group: ParamGroup, X: np.ndarray):
    # ReLU after every trunk layer; returns all activations for backprop.
    acts = [X]
    for W, b in group.layers:
        X = np.maximum(X @ W.T + b, 0.0)
        acts.append(X)
    return X, acts


def _head_forward(group: ParamGroup, Z: np.ndarray):
    # ReLU between layers, final layer left linear for the terminal nonlinearity.
    acts = [Z]
    for W, b in group.layers[:-1]:
        Z = np.maximum(Z @ W.T + b, 0.0)
        acts.append(Z)
    W, b = group.layers[-1]
    return Z @ W.T + b, acts


def _head_backward(group: ParamGroup, acts, delta):
    """Backprop a head given d(loss)/d(final preactivation); returns (dZ, grads)."""
    grads = []
    for j in range(len(group.layers) - 1, -1, -1):
        W, _ = group.layers[j]
        grads.append((delta.T @ acts[j], delta.sum(axis=0)))
        delta = delta @ W
        if j > 0:
            delta = delta * (acts[j] > 0)
    grads.reverse()
    return delta, ParamGroup(grads)


def _feature_backward(group: ParamGroup, acts, dZ):
    grads = []
    for j in range(len(group.layers) - 1, -1, -1):
        W, _ = group.layers[j]
        delta = dZ * (acts[j + 1] > 0)
        grads.append((delta.T @ acts[j], delta.sum(axis=0)))
        dZ = delta @ W
    grads.reverse()
    return ParamGroup(grads)


def forward_features(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    X = _check_input("forward_features", params, X)
    Z, _ = _feature_forward(params.feature, X)
    return Z


def forward_classifier(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Class probabilities, rows on the simplex.

    Returns:
        [n, K] float64 softmax outputs; each row sums to 1 within 1e-9.
    """
    X = _check_input("forward_classifier", params, X)
    Z, _ = _feature_forward(params.feature, X)
    logits, _ = _head_forward(params.classifier, Z)
    return _softmax(logits)


def forward_critic(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Critic scores g(x) in [0, 1], shape [n]."""
    X = _check_input("forward_critic", params, X)
    Z, _ = _feature_forward(params.feature, X)
    s, _ = _head_forward(params.critic, Z)
    return _sigmoid(s[:, 0])


def _critic_backward(params: NetworkParams, f_acts, c_acts, g, dg,
                     include_feature: bool):
    """Backprop d(loss)/dg through sigmoid and critic head (optionally trunk)."""
    delta = (dg * g * (1.0 - g))[:, None]
    dZ, critic_grads = _head_backward(params.critic, c_acts, delta)
    if not include_feature:
        return None, critic_grads
    return _feature_backward(params.feature, f_acts, dZ), critic_grads


def _add_group(a: ParamGroup, b: ParamGroup) -> ParamGroup:
    return ParamGroup([(Wa + Wb, ba + bb) for (Wa, ba), (Wb, bb) in zip(a.layers, b.layers)])


def grad_prediction(params: NetworkParams, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over a labeled batch.

    Args:
        X: [n, d] inputs. y: [n] integer labels in [0, K).

    Returns:
        (Gradients, loss). Critic slots are zero; the loss clamps
        probabilities at LOG_CLAMP before the log.
    """
    X = _check_input("grad_prediction", params, X)
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError(f"grad_prediction: labels shape {y.shape} does not match inputs {X.shape}")
    K = params.classifier.layers[-1][0].shape[0]
    if y.min() < 0 or y.max() >= K:
        raise ValueError(f"grad_prediction: label outside [0, {K})")
    n = X.shape[0]

    Z, f_acts = _feature_forward(params.feature, X)
    logits, c_acts = _head_forward(params.classifier, Z)
    probs = _softmax(logits)
    picked = np.clip(probs[np.arange(n), y], LOG_CLAMP, None)
    loss = float(-np.log(picked).mean())

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dZ, c_grads = _head_backward(params.classifier, c_acts, dlogits)
    f_grads = _feature_backward(params.feature, f_acts, dZ)

    out = zeros_like_params(params)
    out.feature, out.classifier = f_grads, c_grads
    return out, loss


def grad_adversarial(params: NetworkParams, X_l: np.ndarray, X_u: np.ndarray,
                     mu_prime: float, c0: float):
    """Gradient of mu' * (mean g(unlabeled) - c0 * mean g(labeled)).

    Returns (Gradients, value); classifier slots are zero. The caller decides
    ascent or descent per group.
    """
    X_l = _check_input("grad_adversarial", params, X_l)
    X_u = _check_input("grad_adversarial", params, X_u)
    out = zeros_like_params(params)

    value = 0.0
    for X, w in ((X_u, mu_prime / X_u.shape[0]), (X_l, -mu_prime * c0 / X_l.shape[0])):
        Z, f_acts = _feature_forward(params.feature, X)
        s, c_acts = _head_forward(params.critic, Z)
        g = _sigmoid(s[:, 0])
        value += w * g.sum()
        dg = np.full(X.shape[0], w)
        f_grads, c_grads = _critic_backward(params, f_acts, c_acts, g, dg, True)
        out.feature = _add_group(out.feature, f_grads)
        out.critic = _add_group(out.critic, c_grads)
    return out, float(value)


def grad_hdiv_adversarial(params: NetworkParams, X_l: np.ndarray, X_u: np.ndarray,
                          mu: float):
    """Gradient of the binary cross-entropy discriminator objective.

    Value is -mu * (mean log g(unlabeled) + mean log(1 - g(labeled))) with
    clamped logs. Returns (Gradients, value); classifier slots are zero.
    """
    X_l = _check_input("grad_hdiv_adversarial", params, X_l)
    X_u = _check_input("grad_hdiv_adversarial", params, X_u)
    out = zeros_like_params(params)
    value = 0.0

    for X, is_unlabeled in ((X_u, True), (X_l, False)):
        n = X.shape[0]
        Z, f_acts = _feature_forward(params.feature, X)
        s, c_acts = _head_forward(params.critic, Z)
        g = _sigmoid(s[:, 0])
        if is_unlabeled:
            value += -mu * np.log(np.clip(g, LOG_CLAMP, None)).mean()
            dg = -mu / (np.clip(g, LOG_CLAMP, None) * n)
        else:
            value += -mu * np.log(np.clip(1.0 - g, LOG_CLAMP, None)).mean()
            dg = mu / (np.clip(1.0 - g, LOG_CLAMP, None) * n)
        f_grads, c_grads = _critic_backward(params, f_acts, c_acts, g, dg, True)
        out.feature = _add_group(out.feature, f_grads)
        out.critic = _add_group(out.critic, c_grads)
    return out, float(value)


def grad_lipschitz_penalty(params: NetworkParams, X_l: np.ndarray, X_u: np.ndarray,
                           lambda_lip: float):
    """First-order slope penalty on paired labeled/unlabeled critic values.

    Per pair: r = max(0, |g(x_u) - g(x_l)| / ||x_u - x_l||_2 - 1), contributing
    lambda_lip * r^2 / n_pairs. Coincident pairs are skipped. The gradient is
    routed to the critic group only; feature and classifier slots stay zero.

    Returns (Gradients, penalty value).
    """
    X_l = _check_input("grad_lipschitz_penalty", params, X_l)
    X_u = _check_input("grad_lipschitz_penalty", params, X_u)
    if X_l.shape[0] != X_u.shape[0]:
        raise ValueError(
            f"grad_lipschitz_penalty: pair count mismatch {X_l.shape[0]} vs {X_u.shape[0]}")
    n = X_l.shape[0]
    out = zeros_like_params(params)

    dist = np.linalg.norm(X_u - X_l, axis=1)
    valid = dist > 0.0
    if not valid.any():
        return out, 0.0

    Zl, _ = _feature_forward(params.feature, X_l)
    Zu, _ = _feature_forward(params.feature, X_u)
    sl, cl_acts = _head_forward(params.critic, Zl)
    su, cu_acts = _head_forward(params.critic, Zu)
    gl, gu = _sigmoid(sl[:, 0]), _sigmoid(su[:, 0])

    diff = np.where(valid, gu - gl, 0.0)
    quot = np.where(valid, np.abs(diff) / np.where(valid, dist, 1.0), 0.0)
    excess = np.maximum(quot - 1.0, 0.0)
    penalty = float(lambda_lip * np.square(excess).sum() / n)

    # d penalty / d g_u, averaged over all pairs; zero where skipped or slack.
    coef = np.where(valid, 2.0 * lambda_lip * excess * np.sign(diff)
                    / np.where(valid, dist, 1.0) / n, 0.0)
    for acts, g, dg in ((cu_acts, gu, coef), (cl_acts, gl, -coef)):
        _, c_grads = _critic_backward(params, None, acts, g, dg, False)
        out.critic = _add_group(out.critic, c_grads)
    return out, penalty


@dataclass
class OptimizerState:
    velocity: NetworkParams

    @staticmethod
    def zeros(params: NetworkParams) -> "OptimizerState":
        return OptimizerState(zeros_like_params(params))


def sgd_momentum_step(params: NetworkParams, grads: Gradients,
                      state: OptimizerState, lr: float, momentum: float):
    """v <- momentum * v + g; theta <- theta - lr * v. Returns new (params, state)."""
    new_p, new_v = [], []
    for name in GROUP_NAMES:
        p_layers, g_layers, v_layers = (params.group(name).layers,
                                        grads.group(name).layers,
                                        state.velocity.group(name).layers)
        ps, vs = [], []
        for (W, b), (gW, gb), (vW, vb) in zip(p_layers, g_layers, v_layers):
            nvW = momentum * vW + gW
            nvb = momentum * vb + gb
            ps.append((W - lr * nvW, b - lr * nvb))
            vs.append((nvW, nvb))
        new_p.append(ParamGroup(ps))
        new_v.append(ParamGroup(vs))
    return (NetworkParams(*new_p), OptimizerState(NetworkParams(*new_v)))


def clip_critic_weights(params: NetworkParams, clip: float) -> NetworkParams:
    """Clamp every critic entry to [-clip, clip] (weight-clipping mode)."""
    out = params.clone()
    out.critic = ParamGroup([(np.clip(W, -clip, clip), np.clip(b, -clip, clip))
                             for W, b in params.critic.layers])
    return out


def _jitter_biases(params: NetworkParams, rng: np.random.Generator) -> NetworkParams:
    # Zero-init biases can leave preactivations at exactly 0 (a ReLU kink where
    # central differences are ill-posed); checks run at a generic nearby point.
    out = params.clone()
    for name in GROUP_NAMES:
        for _, b in out.group(name).layers:
            b += rng.normal(scale=0.1, size=b.shape)
    return out


def _kink_margin(params: NetworkParams, X: np.ndarray) -> float:
    """Smallest |preactivation| feeding a ReLU, over trunk and both heads."""
    margin = np.inf
    acts = X
    for W, b in params.feature.layers:
        pre = acts @ W.T + b
        margin = min(margin, float(np.abs(pre).min()))
        acts = np.maximum(pre, 0.0)
    for head in (params.classifier, params.critic):
        h = acts
        for W, b in head.layers[:-1]:
            pre = h @ W.T + b
            margin = min(margin, float(np.abs(pre).min()))
            h = np.maximum(pre, 0.0)
    return margin


def _generic_for_differencing(params, X_l, X_u) -> bool:
    # Central differences at eps=1e-5 need the config to sit away from every
    # piecewise boundary: ReLU preactivations, and the slope-penalty kinks at
    # quotient 1 (the |.| kink at 0 only binds when the quotient exceeds 1).
    if min(_kink_margin(params, X_l), _kink_margin(params, X_u)) < 5e-3:
        return False
    n = min(X_l.shape[0], X_u.shape[0])
    dist = np.linalg.norm(X_u[:n] - X_l[:n], axis=1)
    if dist.min() <= 0.0:
        return False
    quot = np.abs(forward_critic(params, X_u[:n]) - forward_critic(params, X_l[:n])) / dist
    return bool(np.all((quot < 0.9) | (quot > 1.1)))


def gradcheck_configs(n_configs: int, seed: int = 20240817):
    """Seeded stream of (params, X_l, y, X_u) tuples with varied shapes.

    Configurations are rejection-sampled to be generic for finite
    differencing; see _generic_for_differencing.
    """
    master = np.random.default_rng(seed)
    produced = 0
    while produced < n_configs:
        d = int(master.integers(2, 6))
        k = int(master.integers(2, 5))
        f = int(master.integers(3, 8))
        spec = LayerSpec(feature=(d, int(master.integers(4, 9)), f),
                         classifier=(f, int(master.integers(3, 7)), k),
                         critic=(f, int(master.integers(3, 7)), 1))
        params = _jitter_biases(init_params(spec, int(master.integers(0, 2**31))), master)
        # A steeper critic plus a few near-coincident pairs pushes some slope
        # quotients above 1, exercising the penalty's active branch.
        for W, _ in params.critic.layers:
            W *= 2.5
        X_l = master.normal(size=(int(master.integers(3, 9)), d))
        y = master.integers(0, k, size=X_l.shape[0])
        X_u = master.normal(size=(int(master.integers(3, 9)), d))
        n_close = min(3, X_l.shape[0], X_u.shape[0])
        for i in range(n_close):
            step = master.normal(size=d)
            step *= master.uniform(0.002, 0.01) / np.linalg.norm(step)
            X_u[i] = X_l[i] + step
        if not _generic_for_differencing(params, X_l, X_u):
            continue
        produced += 1
        yield params, X_l, y, X_u


def gradcheck_report(n_configs: int = 20, seed: int = 20240817,
                     epsilon: float = 1e-5) -> dict:
    """Worst finite-difference error per loss over seeded configurations.

    Covers the prediction loss, both adversarial objectives, the slope
    penalty, and the critic-side composite of adversarial plus penalty.
    """
    worst = {"prediction": 0.0, "adversarial": 0.0, "hdiv": 0.0,
             "lipschitz_penalty": 0.0, "composite": 0.0}
    for params, X_l, y, X_u in gradcheck_configs(n_configs, seed):
        n = min(X_l.shape[0], X_u.shape[0])

        def pred(p):
            g, v = grad_prediction(p, X_l, y)
            return v, g

        def adv(p):
            g, v = grad_adversarial(p, X_l, X_u, mu_prime=0.3, c0=0.05)
            return v, g

        def hdiv(p):
            g, v = grad_hdiv_adversarial(p, X_l, X_u, mu=0.01)
            return v, g

        def pen(p):
            g, v = grad_lipschitz_penalty(p, X_l[:n], X_u[:n], lambda_lip=10.0)
            return v, g

        def composite(p):
            ga, va = grad_adversarial(p, X_l, X_u, mu_prime=0.3, c0=0.05)
            gp, vp = grad_lipschitz_penalty(p, X_l[:n], X_u[:n], lambda_lip=10.0)
            out = zeros_like_params(p)
            out.critic = _add_group(ga.critic, gp.critic)
            return va + vp, out

        checks = (
            ("prediction", pred, ("feature", "classifier")),
            ("adversarial", adv, ("feature", "critic")),
            ("hdiv", hdiv, ("feature", "critic")),
            ("lipschitz_penalty", pen, ("critic",)),
            ("composite", composite, ("critic",)),
        )
        for name, fn, groups in checks:
            worst[name] = max(worst[name],
                              numerical_grad_check(params, fn, epsilon, groups=groups))
    return worst


def _coordinate_picks(size: int, limit: int) -> np.ndarray:
    if size <= limit:
        return np.arange(size)
    return np.unique(np.linspace(0, size - 1, limit).astype(int))


def numerical_grad_check(params: NetworkParams, loss_fn, epsilon: float = 1e-5,
                         groups=GROUP_NAMES, max_per_array: int = 6) -> float:
    """Worst central-difference discrepancy over a deterministic coordinate subsample.

    Args:
        loss_fn: params -> (scalar loss, Gradients). The analytic gradient is
            compared against (f(p + eps e) - f(p - eps e)) / (2 eps).
        groups: group names whose coordinates are probed. Losses that route
            gradient to a subset of groups (the slope penalty) must restrict
            the probe accordingly.

    Returns:
        max over probed coordinates of |analytic - numeric| / max(1, |a|, |n|).
    """
    base_loss, grads = loss_fn(params)
    if not np.isfinite(base_loss):
        raise ValueError(f"numerical_grad_check: loss is not finite ({base_loss})")

    worst = 0.0
    for name in groups:
        for li, (W, b) in enumerate(params.group(name).layers):
            for slot, arr in ((0, W), (1, b)):
                flat = arr.reshape(-1)
                analytic = grads.group(name).layers[li][slot].reshape(-1)
                for idx in _coordinate_picks(flat.size, max_per_array):
                    probe = params.clone()
                    pf = probe.group(name).layers[li][slot].reshape(-1)
                    orig = pf[idx]
                    pf[idx] = orig + epsilon
                    up, _ = loss_fn(probe)
                    pf[idx] = orig - epsilon
                    down, _ = loss_fn(probe)
                    if not (np.isfinite(up) and np.isfinite(down)):
                        raise ValueError("numerical_grad_check: perturbed loss is not finite")
                    numeric = (up - down) / (2.0 * epsilon)
                    a = analytic[idx]
                    err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                    worst = max(worst, err)
    return worst
