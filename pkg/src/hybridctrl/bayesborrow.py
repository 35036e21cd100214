"""Bayesian dynamic borrowing with commensurate priors on a Weibull outcome model.

Eight variants: NB (current trial only), FB (historical controls pooled into
the current controls), and six commensurate-prior variants crossing three
precision priors (Noninformative / Informative gamma, Weakly informative
half-Cauchy on the square root) with Same (one precision linking the current
control effect to a pooled historical effect) or Distinct (one precision per
historical trial) structures.

The sampler is component-wise adaptive random-walk Metropolis for location
parameters and the log shape, with exact conjugate Gibbs draws for
gamma-prior precisions; half-Cauchy precisions are sampled on the sqrt scale.
All random numbers are pre-drawn per chain from a spawned generator, so runs
are deterministic given the seed; the inner loop itself is numba-compiled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .datagen import TrialData
from .exceptions import ConfigError, MixingFailure

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

VARIANTS = ("NB", "FB", "NPS", "NPD", "IPS", "IPD", "WPS", "WPD")

#: Vague normal prior variance for location parameters (read as a variance).
VAGUE_VARIANCE = 1000.0
#: Gamma prior on the Weibull shape (vague, proper).
SHAPE_PRIOR = (0.01, 0.01)
#: tau prior hyperparameters by family letter.
GAMMA_TAU_PRIORS = {"N": (0.001, 0.001), "I": (1.0, 0.001)}
HALF_CAUCHY_SCALE = 2.5

_LOG_2PI = math.log(2.0 * math.pi)
_EXP_CAP = 500.0
_GROUPS = ("MT", "MC", "HC0", "HC1")

# Parameter-vector slots used inside the sampler. The treated-arm predictor
# mu_mt = alpha0 + delta is sampled directly (delta derived) so that alpha0
# and the treatment contrast decorrelate and chains mix fast.
_A0, _M1, _A1, _A2, _A3, _LOGP = range(6)
# Slot -1 is the joint "sync" move: a common shift of alpha0 and its
# commensurate anchors. It leaves the gaps (and hence tau's pull) unchanged,
# which breaks the funnel that freezes component-wise moves when tau is large.
_SYNC = -1
_PARAM_INDEX = {"alpha0": _A0, "mu_mt": _M1, "alpha1": _A1, "alpha2": _A2,
                "alpha3": _A3, "logp": _LOGP, "sync": _SYNC}
# Record codes: 0..5 parameter vector, 6 shape, 7 tau[0], 8 tau[1], 9 delta.
_REC_NAMES = {0: "alpha0", 2: "alpha1", 3: "alpha2", 4: "alpha3",
              6: "shape", 7: "tau", 8: "tau2", 9: "delta"}


@dataclass(frozen=True)
class BayesParams:
    """One point in parameter space; fields unused by a variant stay None."""

    alpha0: float
    delta: float
    shape: float
    alpha1: float | None = None
    alpha2: float | None = None
    alpha3: float | None = None
    tau: float | None = None
    tau1: float | None = None
    tau2: float | None = None
    n_hc0: int = 0
    n_hc1: int = 0

    def validate(self) -> None:
        if self.shape is None or self.shape <= 0:
            raise ConfigError("shape must be positive")
        for name in ("tau", "tau1", "tau2"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def _variant_structure(variant: str, same_form: str) -> str:
    """Return 'benchmark', 'pooled' (alpha3), or 'anchored' (alpha1/alpha2)."""
    _check_variant(variant)
    if same_form not in ("pooled", "weighted"):
        raise ConfigError(f"same_form must be 'pooled' or 'weighted', got {same_form!r}")
    if variant in ("NB", "FB"):
        return "benchmark"
    if variant.endswith("D"):
        return "anchored"
    return "pooled" if same_form == "pooled" else "anchored"


def _group_fs(variant: str, structure: str, alpha0, delta, alpha1, alpha2, alpha3):
    """Linear predictor per group, ordered MT, MC, HC0, HC1 (None = excluded)."""
    if variant == "NB":
        return (alpha0 + delta, alpha0, None, None)
    if variant == "FB":
        return (alpha0 + delta, alpha0, alpha0, alpha0)
    if structure == "pooled":
        return (alpha0 + delta, alpha0, alpha3, alpha3)
    return (alpha0 + delta, alpha0, alpha1, alpha2)


def _weibull_group_ll(d: float, sum_log_t: float, sum_t_p: float, f: float,
                      shape: float) -> float:
    """Weibull PH log-likelihood of one group with common linear predictor f."""
    ef = math.exp(min(f, _EXP_CAP))
    return d * (math.log(shape) + f) + (shape - 1.0) * sum_log_t - ef * sum_t_p


def _normal_logpdf(x: float, mean: float, variance: float) -> float:
    return -0.5 * (_LOG_2PI + math.log(variance)) - (x - mean) ** 2 / (2.0 * variance)


def half_cauchy_logpdf(s: float, scale: float = HALF_CAUCHY_SCALE) -> float:
    """Half-Cauchy density (truncated at 0) evaluated at s >= 0."""
    if s < 0:
        return -math.inf
    return math.log(2.0) - math.log(math.pi) - math.log(scale) - math.log1p((s / scale) ** 2)


def gamma_logpdf(x: float, a: float, b: float) -> float:
    """Gamma(shape a, rate b) log-density."""
    if x < 0:
        return -math.inf
    if x == 0.0:
        # Boundary value: finite only for a = 1 (exponential), else +-inf.
        if a == 1.0:
            return math.log(b)
        return math.inf if a < 1.0 else -math.inf
    return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x


def _tau_log_prior(family: str, tau: float) -> float:
    if tau is None or tau <= 0:
        raise ConfigError("tau must be positive")
    if family in GAMMA_TAU_PRIORS:
        a, b = GAMMA_TAU_PRIORS[family]
        return gamma_logpdf(tau, a, b)
    # Weakly informative: half-Cauchy density of sqrt(tau), the sampled scale.
    return half_cauchy_logpdf(math.sqrt(tau))


def _log_prior_terms(variant: str, structure: str, alpha0, delta, alpha1, alpha2,
                     alpha3, tau, tau1, tau2, shape, n_hc0, n_hc1) -> float:
    lp = _normal_logpdf(delta, 0.0, VAGUE_VARIANCE)
    a_s, b_s = SHAPE_PRIOR
    lp += gamma_logpdf(shape, a_s, b_s)
    if variant in ("NB", "FB"):
        return lp + _normal_logpdf(alpha0, 0.0, VAGUE_VARIANCE)
    family = variant[0]
    if structure == "pooled":
        lp += _normal_logpdf(alpha3, 0.0, VAGUE_VARIANCE)
        lp += _normal_logpdf(alpha0, alpha3, 1.0 / tau)
        lp += _tau_log_prior(family, tau)
    elif variant.endswith("S"):
        # Same prior, size-weighted anchor form: one tau against the weighted mean.
        lp += _normal_logpdf(alpha1, 0.0, VAGUE_VARIANCE)
        lp += _normal_logpdf(alpha2, 0.0, VAGUE_VARIANCE)
        w1 = n_hc0 / (n_hc0 + n_hc1)
        anchor = w1 * alpha1 + (1.0 - w1) * alpha2
        lp += _normal_logpdf(alpha0, anchor, 1.0 / tau)
        lp += _tau_log_prior(family, tau)
    else:
        # Distinct: one pairwise commensurate link per historical trial.
        lp += _normal_logpdf(alpha1, 0.0, VAGUE_VARIANCE)
        lp += _normal_logpdf(alpha2, 0.0, VAGUE_VARIANCE)
        lp += _normal_logpdf(alpha0, alpha1, 1.0 / tau1)
        lp += _normal_logpdf(alpha0, alpha2, 1.0 / tau2)
        lp += _tau_log_prior(family, tau1)
        lp += _tau_log_prior(family, tau2)
    return lp


def log_prior(params: BayesParams, variant: str, same_form: str = "pooled") -> float:
    """Joint log-prior of a parameter point under the given variant."""
    params.validate()
    structure = _variant_structure(variant, same_form)
    return _log_prior_terms(variant, structure, params.alpha0, params.delta,
                            params.alpha1, params.alpha2, params.alpha3,
                            params.tau, params.tau1, params.tau2, params.shape,
                            params.n_hc0, params.n_hc1)


def _group_arrays(data: TrialData):
    groups = []
    for arm in _GROUPS:
        mask = data.arm_mask(arm)
        t = data.time[mask].astype(float)
        ev = data.event[mask].astype(float)
        if np.any(t <= 0):
            raise ConfigError("times must be positive")
        groups.append((t, float(ev.sum()),
                       float(np.sum(np.log(t[ev > 0])) if ev.any() else 0.0)))
    return groups


def log_likelihood(data: TrialData, params: BayesParams, variant: str,
                   same_form: str = "pooled") -> float:
    """Weibull outcome log-likelihood of the dataset under the given variant.

    Events contribute log p + (p-1) log t + f - exp(f) t^p; censored subjects
    contribute -exp(f) t^p. NB drops the historical groups entirely; FB
    evaluates them under the current-control predictor.
    """
    params.validate()
    structure = _variant_structure(variant, same_form)
    fs = _group_fs(variant, structure, params.alpha0, params.delta,
                   params.alpha1, params.alpha2, params.alpha3)
    p = params.shape
    total = 0.0
    for (t, d, sum_log_t), f in zip(_group_arrays(data), fs):
        if f is None:
            continue
        total += _weibull_group_ll(d, sum_log_t, float(np.sum(t**p)), f, p)
    return total


def sample_tau_conditional(rng: np.random.Generator, a: float, b: float,
                           alpha0: float, anchor: float, size=None):
    """Exact Gibbs draw for a gamma-prior commensurate precision.

    The full conditional given the commensurate normal link is
    Gamma(a + 1/2, b + (alpha0 - anchor)^2 / 2).
    """
    rate = b + 0.5 * (alpha0 - anchor) ** 2
    return rng.gamma(shape=a + 0.5, scale=1.0 / rate, size=size)


# ---------------------------------------------------------------------------
# Sampler core. Plain procedural code over arrays/floats so that numba can
# compile it; the undecorated functions remain the (identical) fallback.
# ---------------------------------------------------------------------------

def _prior_eval(a0, m1, a1, a2, a3, logp, t0, t1, prior_kind, tau_kind, w1, hc_s2,
                a_s, b_s, c_shape, c_norm, inv2v, a_t, b_t, c_tau, c_hc, hlp):
    # prior_kind: 0 benchmark, 1 pooled, 2 weighted anchor, 3 distinct.
    # Includes the log-shape Jacobian (sampling runs on log p); the delta
    # prior applies to the derived contrast m1 - a0 (unit Jacobian).
    dl = m1 - a0
    lp = (c_norm - dl * dl * inv2v
          + c_shape + a_s * logp - b_s * math.exp(logp))
    if prior_kind == 0:
        return lp + c_norm - a0 * a0 * inv2v
    if tau_kind == 1:
        tt0 = c_tau + (a_t - 1.0) * math.log(t0) - b_t * t0
        tt1 = c_tau + (a_t - 1.0) * math.log(t1) - b_t * t1
    else:
        tt0 = c_hc - math.log1p(t0 / hc_s2)
        tt1 = c_hc - math.log1p(t1 / hc_s2)
    if prior_kind == 1:
        lp += c_norm - a3 * a3 * inv2v
        lp += 0.5 * math.log(t0) - hlp - 0.5 * t0 * (a0 - a3) ** 2
        lp += tt0
    elif prior_kind == 2:
        lp += 2.0 * c_norm - (a1 * a1 + a2 * a2) * inv2v
        m = w1 * a1 + (1.0 - w1) * a2
        lp += 0.5 * math.log(t0) - hlp - 0.5 * t0 * (a0 - m) ** 2
        lp += tt0
    else:
        lp += 2.0 * c_norm - (a1 * a1 + a2 * a2) * inv2v
        lp += 0.5 * math.log(t0) - hlp - 0.5 * t0 * (a0 - a1) ** 2
        lp += 0.5 * math.log(t1) - hlp - 0.5 * t1 * (a0 - a2) ** 2
        lp += tt0 + tt1
    return lp


def _f_eval(code, pv):
    if code == 0:
        return pv[1]
    if code == 1:
        return pv[0]
    if code == 2:
        return pv[2]
    if code == 3:
        return pv[3]
    return pv[4]


def _group_ll_eval(d, slt, stp, f, shape):
    ef = math.exp(min(f, 500.0))
    return d * (math.log(shape) + f) + (shape - 1.0) * slt - ef * stp


def _chain_loop(ltv, goff, d, slt, active, f_code, pv, tau_arr,
                slot_pidx, aff_mat, aff_cnt, n_mh, n_tau_mh, sync_idx,
                tau_gibbs, anchor_mode, w1, prior_kind, tau_kind, hc_s2,
                a_s, b_s, c_shape, c_norm, inv2v, a_t, b_t, c_tau, c_hc, hlp,
                adapt_iters, sample_iters, norms, logu, gunit,
                rec_codes, record, step, acc_total, tries_total):
    n_groups = d.shape[0]
    n_slots = n_mh + n_tau_mh
    shape = math.exp(pv[_LOGP])
    stp = np.zeros(n_groups)
    newstp = np.zeros(n_groups)
    ll = np.zeros(n_groups)
    new_vals = np.zeros(4)
    for i in range(n_groups):
        s = 0.0
        for k in range(goff[i], goff[i + 1]):
            s += math.exp(shape * ltv[k])
        stp[i] = s
        if active[i]:
            ll[i] = _group_ll_eval(d[i], slt[i], stp[i], _f_eval(f_code[i], pv), shape)
    lp_cur = _prior_eval(pv[0], pv[1], pv[2], pv[3], pv[4], pv[5],
                         tau_arr[0], tau_arr[1], prior_kind, tau_kind, w1, hc_s2,
                         a_s, b_s, c_shape, c_norm, inv2v, a_t, b_t, c_tau, c_hc, hlp)

    acc_b = np.zeros(n_slots)
    tries_b = np.zeros(n_slots)
    batch = 0
    for it in range(adapt_iters + sample_iters):
        for k in range(n_mh):
            pidx = slot_pidx[k]
            tries_b[k] += 1.0
            tries_total[k] += 1
            if pidx == _SYNC:
                eps = step[k] * norms[it, k]
                for si in range(sync_idx.shape[0]):
                    pv[sync_idx[si]] += eps
                old = eps  # amount to undo on reject
            else:
                old = pv[pidx]
                pv[pidx] = old + step[k] * norms[it, k]
            if pidx == _LOGP:
                new_shape = math.exp(pv[_LOGP])
                for i in range(n_groups):
                    s = 0.0
                    for kk in range(goff[i], goff[i + 1]):
                        s += math.exp(new_shape * ltv[kk])
                    newstp[i] = s
            else:
                new_shape = shape
            pr_new = _prior_eval(pv[0], pv[1], pv[2], pv[3], pv[4], pv[5],
                                 tau_arr[0], tau_arr[1], prior_kind, tau_kind, w1,
                                 hc_s2, a_s, b_s, c_shape, c_norm, inv2v, a_t, b_t,
                                 c_tau, c_hc, hlp)
            dlp = pr_new - lp_cur
            for a in range(aff_cnt[k]):
                i = aff_mat[k, a]
                cur_stp = newstp[i] if pidx == _LOGP else stp[i]
                v = _group_ll_eval(d[i], slt[i], cur_stp, _f_eval(f_code[i], pv),
                                   new_shape)
                new_vals[a] = v
                dlp += v - ll[i]
            if dlp >= 0.0 or logu[it, k] < dlp:
                for a in range(aff_cnt[k]):
                    ll[aff_mat[k, a]] = new_vals[a]
                if pidx == _LOGP:
                    shape = new_shape
                    for i in range(n_groups):
                        stp[i] = newstp[i]
                lp_cur = pr_new
                acc_b[k] += 1.0
                acc_total[k] += 1
            else:
                if pidx == _SYNC:
                    for si in range(sync_idx.shape[0]):
                        pv[sync_idx[si]] -= old
                else:
                    pv[pidx] = old

        if tau_gibbs == 1:
            if anchor_mode == 0:
                anchor = pv[_A3]
            else:
                anchor = w1 * pv[_A1] + (1.0 - w1) * pv[_A2]
            tau_arr[0] = gunit[it, 0] / (b_t + 0.5 * (pv[_A0] - anchor) ** 2)
            lp_cur = _prior_eval(pv[0], pv[1], pv[2], pv[3], pv[4], pv[5],
                                 tau_arr[0], tau_arr[1], prior_kind, tau_kind, w1,
                                 hc_s2, a_s, b_s, c_shape, c_norm, inv2v, a_t, b_t,
                                 c_tau, c_hc, hlp)
        elif tau_gibbs == 2:
            tau_arr[0] = gunit[it, 0] / (b_t + 0.5 * (pv[_A0] - pv[_A1]) ** 2)
            tau_arr[1] = gunit[it, 1] / (b_t + 0.5 * (pv[_A0] - pv[_A2]) ** 2)
            lp_cur = _prior_eval(pv[0], pv[1], pv[2], pv[3], pv[4], pv[5],
                                 tau_arr[0], tau_arr[1], prior_kind, tau_kind, w1,
                                 hc_s2, a_s, b_s, c_shape, c_norm, inv2v, a_t, b_t,
                                 c_tau, c_hc, hlp)
        else:
            for j in range(n_tau_mh):
                k = n_mh + j
                tries_b[k] += 1.0
                tries_total[k] += 1
                old_t = tau_arr[j]
                s_new = math.sqrt(old_t) + step[k] * norms[it, k]
                if s_new <= 0.0:
                    continue
                tau_arr[j] = s_new * s_new
                pr_new = _prior_eval(pv[0], pv[1], pv[2], pv[3], pv[4], pv[5],
                                     tau_arr[0], tau_arr[1], prior_kind, tau_kind,
                                     w1, hc_s2, a_s, b_s, c_shape, c_norm, inv2v,
                                     a_t, b_t, c_tau, c_hc, hlp)
                dlp = pr_new - lp_cur
                if dlp >= 0.0 or logu[it, k] < dlp:
                    lp_cur = pr_new
                    acc_b[k] += 1.0
                    acc_total[k] += 1
                else:
                    tau_arr[j] = old_t

        if it < adapt_iters:
            if (it + 1) % 25 == 0:
                batch += 1
                gain = 1.0 / math.sqrt(batch)
                if gain > 0.25:
                    gain = 0.25
                for k in range(n_slots):
                    if tries_b[k] > 0.0:
                        if acc_b[k] / tries_b[k] > 0.44:
                            step[k] *= math.exp(gain)
                        else:
                            step[k] *= math.exp(-gain)
                    acc_b[k] = 0.0
                    tries_b[k] = 0.0
        else:
            jrec = it - adapt_iters
            for r in range(rec_codes.shape[0]):
                c = rec_codes[r]
                if c < 6:
                    record[r, jrec] = pv[c]
                elif c == 6:
                    record[r, jrec] = shape
                elif c == 7:
                    record[r, jrec] = tau_arr[0]
                elif c == 8:
                    record[r, jrec] = tau_arr[1]
                else:
                    record[r, jrec] = pv[_M1] - pv[_A0]


_chain_loop_py = _chain_loop
if _njit is not None:
    _prior_eval = _njit(cache=True)(_prior_eval)
    _f_eval = _njit(cache=True)(_f_eval)
    _group_ll_eval = _njit(cache=True)(_group_ll_eval)
    _chain_loop = _njit(cache=True)(_chain_loop)


def _run_chain(groups, variant, structure, n_hc0, n_hc1, adapt_iters, sample_iters,
               rng, fix_shape, fix_tau, init_scale, loop=None):
    fb = variant == "FB"
    pooled = structure == "pooled"
    n_groups = len(groups)

    ltv = np.concatenate([np.log(g[0]) for g in groups])
    goff = np.zeros(n_groups + 1, dtype=np.int64)
    for i, g in enumerate(groups):
        goff[i + 1] = goff[i] + g[0].shape[0]
    d = np.array([g[1] for g in groups])
    slt = np.array([g[2] for g in groups])
    active = np.ones(n_groups, dtype=np.bool_)
    f_code = np.zeros(n_groups, dtype=np.int64)
    f_code[0] = 0
    f_code[1] = 1
    if n_groups == 4:
        if fb:
            f_code[2] = f_code[3] = 1
        elif pooled:
            f_code[2] = f_code[3] = 4
        else:
            f_code[2], f_code[3] = 2, 3

    # Crude common-rate starting point keeps early adaptation short.
    crude = math.log((float(d.sum()) + 0.5) / (float(np.exp(ltv).sum()) + 0.5))
    jit = init_scale * rng.standard_normal(6)
    pv = np.array([crude + jit[0], crude + jit[1], crude + jit[2], crude + jit[3],
                   crude + jit[4], 0.3 * jit[5]])
    if fix_shape is not None:
        pv[_LOGP] = math.log(fix_shape)
    tau_arr = np.full(2, float(fix_tau) if fix_tau is not None else 1.0)

    sampled = ["alpha0", "mu_mt"]
    sync_idx = np.empty(0, dtype=np.int64)
    if variant not in ("NB", "FB"):
        if pooled:
            sampled.append("alpha3")
            sync_idx = np.array([_A0, _A3], dtype=np.int64)
        else:
            sampled.extend(["alpha1", "alpha2"])
            sync_idx = np.array([_A0, _A1, _A2], dtype=np.int64)
        sampled.append("sync")
    if fix_shape is None:
        sampled.append("logp")
    family = variant[0] if variant not in ("NB", "FB") else None
    tau_names: list[str] = []
    if family is not None and fix_tau is None:
        tau_names = ["tau1", "tau2"] if variant.endswith("D") else ["tau"]
    gibbs = family in GAMMA_TAU_PRIORS and bool(tau_names)
    n_tau_mh = 0 if (gibbs or not tau_names) else len(tau_names)
    tau_gibbs = 0
    if gibbs:
        tau_gibbs = 2 if variant.endswith("D") else 1

    affected = {"alpha0": [1] + ([2, 3] if fb else []), "mu_mt": [0],
                "alpha1": [2], "alpha2": [3], "alpha3": [2, 3],
                "sync": [1, 2, 3], "logp": list(range(n_groups))}
    n_mh = len(sampled)
    n_slots = n_mh + n_tau_mh
    slot_pidx = np.array([_PARAM_INDEX[name] for name in sampled], dtype=np.int64)
    aff_mat = np.zeros((max(n_mh, 1), 4), dtype=np.int64)
    aff_cnt = np.zeros(max(n_mh, 1), dtype=np.int64)
    for k, name in enumerate(sampled):
        idxs = [i for i in affected[name] if i < n_groups]
        aff_cnt[k] = len(idxs)
        aff_mat[k, :len(idxs)] = idxs

    if variant in ("NB", "FB"):
        prior_kind = 0
    elif pooled:
        prior_kind = 1
    elif variant.endswith("S"):
        prior_kind = 2
    else:
        prior_kind = 3
    tau_kind = 1 if (family in GAMMA_TAU_PRIORS) else 2
    a_t, b_t = GAMMA_TAU_PRIORS.get(family, (0.0, 0.0)) if family else (0.0, 0.0)
    c_tau = (a_t * math.log(b_t) - math.lgamma(a_t)) if a_t > 0 else 0.0
    c_hc = math.log(2.0) - math.log(math.pi) - math.log(HALF_CAUCHY_SCALE)
    a_s, b_s = SHAPE_PRIOR
    c_shape = a_s * math.log(b_s) - math.lgamma(a_s)
    c_norm = -0.5 * (_LOG_2PI + math.log(VAGUE_VARIANCE))
    inv2v = 0.5 / VAGUE_VARIANCE
    hlp = 0.5 * _LOG_2PI
    hc_s2 = HALF_CAUCHY_SCALE**2
    w1 = n_hc0 / (n_hc0 + n_hc1) if (n_hc0 + n_hc1) > 0 else 0.5
    anchor_mode = 0 if pooled else 1

    total_iters = adapt_iters + sample_iters
    norms = rng.standard_normal((total_iters, n_slots))
    logu = np.log(np.clip(rng.random((total_iters, n_slots)), 1e-300, None))
    if tau_gibbs:
        gunit = rng.gamma(a_t + 0.5, 1.0, size=(total_iters, 2))
    else:
        gunit = np.zeros((total_iters, 2))

    rec_codes = [0, 9]
    if variant not in ("NB", "FB"):
        rec_codes += [4] if pooled else [2, 3]
    rec_codes.append(6)
    rec_codes += {0: [], 1: [7], 2: [7, 8]}[tau_gibbs] if gibbs else (
        [7, 8][:len(tau_names)] if tau_names else [])
    rec_codes = np.array(sorted(set(rec_codes)), dtype=np.int64)
    record = np.empty((rec_codes.shape[0], sample_iters))

    step = np.array([0.25 if name == "logp" else 0.5 for name in sampled]
                    + [0.5] * n_tau_mh)
    acc_total = np.zeros(n_slots, dtype=np.int64)
    tries_total = np.zeros(n_slots, dtype=np.int64)

    run = loop if loop is not None else _chain_loop
    run(ltv, goff, d, slt, active, f_code, pv, tau_arr,
        slot_pidx, aff_mat, aff_cnt, n_mh, n_tau_mh, sync_idx,
        tau_gibbs, anchor_mode, w1, prior_kind, tau_kind, hc_s2,
        a_s, b_s, c_shape, c_norm, inv2v, a_t, b_t, c_tau, c_hc, hlp,
        adapt_iters, sample_iters, norms, logu, gunit,
        rec_codes, record, step, acc_total, tries_total)

    names = []
    for c in rec_codes:
        name = _REC_NAMES[int(c)]
        if int(c) == 7 and len(tau_names) == 2:
            name = "tau1"
        names.append(name)
    rec = {name: record[r].copy() for r, name in enumerate(names)}
    slots = list(sampled) + (tau_names if n_tau_mh else [])
    rates = {slots[k]: (acc_total[k] / tries_total[k] if tries_total[k] else 0.0)
             for k in range(n_slots)}
    return rec, rates


@dataclass
class PosteriorResult:
    """Pooled posterior draws with split-Rhat and acceptance diagnostics."""

    variant: str
    draws: dict[str, np.ndarray]
    rhat: dict[str, float]
    accept_rate: dict[str, float]
    chains: int
    seed: int | None = None

    def delta_draws(self) -> np.ndarray:
        return self.draws["delta"].ravel()

    def summary(self) -> tuple[float, float]:
        return posterior_summary(self.delta_draws())

    def to_csv(self, path) -> None:
        """Diagnostics export: `chain,iter,delta,alpha0,...`."""
        names = list(self.draws)
        ordered = ["delta"] + [n for n in names if n != "delta"]
        n_chain, n_iter = self.draws["delta"].shape
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["chain", "iter"] + ordered)
            for c in range(n_chain):
                for i in range(n_iter):
                    writer.writerow([c, i] + [repr(float(self.draws[n][c, i]))
                                              for n in ordered])


def posterior_summary(draws: np.ndarray) -> tuple[float, float]:
    """Sample mean and variance (n-1 denominator) of pooled draws."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise ConfigError("no posterior draws")
    mean = float(draws.mean())
    var = float(draws.var(ddof=1)) if draws.size > 1 else 0.0
    return mean, var


def split_rhat(chains: np.ndarray) -> float:
    """Split-Rhat over an array of shape (chains, iterations)."""
    chains = np.asarray(chains, dtype=float)
    n_chain, n_iter = chains.shape
    half = n_iter // 2
    if half < 2:
        return float("nan")
    segments = np.vstack([chains[:, :half], chains[:, half:2 * half]])
    seg_means = segments.mean(axis=1)
    seg_vars = segments.var(axis=1, ddof=1)
    w = float(seg_vars.mean())
    b = half * float(seg_means.var(ddof=1))
    if w <= 0:
        return 1.0
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w))


def check_mixing(result: PosteriorResult, threshold: float = 1.1) -> None:
    r = result.rhat.get("delta", float("nan"))
    if np.isfinite(r) and r > threshold:
        raise MixingFailure(f"split-Rhat for delta is {r:.3f} > {threshold}")


def mcmc_run(data: TrialData, variant: str, chains: int = 3, adapt_iters: int = 1000,
             sample_iters: int = 2000, seed=0, *, same_form: str = "pooled",
             fix_shape: float | None = None, fix_tau: float | None = None,
             init_scale: float = 0.5, strict: bool = False) -> PosteriorResult:
    """Run the sampler and pool post-adaptation draws.

    Deterministic given ``seed``. ``fix_shape`` / ``fix_tau`` pin those
    parameters (used by diagnostics and equivalence tests). With ``strict``
    a delta split-Rhat above 1.1 raises MixingFailure; otherwise the Rhat is
    reported and left to the caller.
    """
    _check_variant(variant)
    structure = _variant_structure(variant, same_form)
    if chains < 1 or adapt_iters < 0 or sample_iters < 1:
        raise ConfigError("chains >= 1, adapt_iters >= 0, sample_iters >= 1 required")
    groups = _group_arrays(data)
    if variant == "NB":
        groups = groups[:2]
    n_hc0 = int(np.sum(data.source == "HC0"))
    n_hc1 = int(np.sum(data.source == "HC1"))

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(chains)
    records = []
    rates_all: dict[str, list[float]] = {}
    for c in range(chains):
        rng = np.random.default_rng(children[c])
        rec, rates = _run_chain(groups, variant, structure, n_hc0, n_hc1,
                                adapt_iters, sample_iters, rng, fix_shape,
                                fix_tau, init_scale)
        records.append(rec)
        for name, r in rates.items():
            rates_all.setdefault(name, []).append(r)

    draws = {name: np.vstack([rec[name] for rec in records]) for name in records[0]}
    rhat = {name: split_rhat(arr) for name, arr in draws.items()}
    result = PosteriorResult(
        variant=variant,
        draws=draws,
        rhat=rhat,
        accept_rate={name: float(np.mean(v)) for name, v in rates_all.items()},
        chains=chains,
        seed=seed if isinstance(seed, int) else None,
    )
    if strict:
        check_mixing(result)
    return result
