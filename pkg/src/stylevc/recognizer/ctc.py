"""CTC lattice computations: forward likelihood, feasibility, Viterbi alignment.

All functions operate on a single utterance's (T, V) log-probability matrix
over blank-augmented label states. The forward recursion is written with
torch ops so gradients flow to the acoustic model.
"""

from __future__ import annotations

import torch

from ..errors import InfeasibleAlignmentError


def extended_states(targets: list[int] | tuple[int, ...], blank: int) -> list[int]:
    """Blank-augmented state sequence: blank, y1, blank, y2, ..., blank."""
    ext = [blank]
    for t in targets:
        ext.append(int(t))
        ext.append(blank)
    return ext


def min_frames(targets) -> int:
    """Fewest frames a CTC path needs: one per label plus one per repeat."""
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def check_feasible(n_frames: int, targets) -> None:
    need = min_frames(targets)
    if n_frames < need:
        raise InfeasibleAlignmentError(
            f"{len(targets)} labels need at least {need} frames, got {n_frames}"
        )


def _transition_masks(ext: list[int], device, dtype):
    """Additive masks (0 or -inf) for the prev and skip transitions."""
    s = len(ext)
    neg_inf = torch.finfo(dtype).min
    skip_mask = torch.zeros(s, dtype=dtype, device=device)
    for i in range(s):
        if i < 2 or ext[i] == ext[i - 2]:
            skip_mask[i] = neg_inf
    prev_mask = torch.zeros(s, dtype=dtype, device=device)
    prev_mask[0] = neg_inf
    return prev_mask, skip_mask


def _shift(alpha: torch.Tensor, k: int) -> torch.Tensor:
    if k >= alpha.shape[0]:
        return torch.full_like(alpha, torch.finfo(alpha.dtype).min)
    pad = torch.full((k,), torch.finfo(alpha.dtype).min, dtype=alpha.dtype,
                     device=alpha.device)
    return torch.cat([pad, alpha[:-k]])


def ctc_log_likelihood(log_probs: torch.Tensor, targets, blank: int) -> torch.Tensor:
    """log P_CTC(targets | log_probs), summed over all valid paths.

    log_probs: (T, V) per-frame log-softmax. Differentiable.
    """
    targets = list(targets)
    t_len = log_probs.shape[0]
    check_feasible(t_len, targets)
    ext = extended_states(targets, blank)
    state_ids = torch.tensor(ext, dtype=torch.long, device=log_probs.device)
    prev_mask, skip_mask = _transition_masks(ext, log_probs.device, log_probs.dtype)
    neg_inf = torch.finfo(log_probs.dtype).min

    alpha = torch.full((len(ext),), neg_inf, dtype=log_probs.dtype,
                       device=log_probs.device)
    emit0 = log_probs[0, state_ids]
    alpha = alpha.clone()
    alpha[0] = emit0[0]
    if len(ext) > 1:
        alpha[1] = emit0[1]
    for t in range(1, t_len):
        stay = alpha
        prev = _shift(alpha, 1) + prev_mask
        skip = _shift(alpha, 2) + skip_mask
        alpha = torch.logsumexp(torch.stack([stay, prev, skip]), dim=0)
        alpha = alpha + log_probs[t, state_ids]
    if len(ext) > 1:
        return torch.logsumexp(torch.stack([alpha[-1], alpha[-2]]), dim=0)
    return alpha[-1]


def ctc_viterbi_durations(log_probs: torch.Tensor, targets, blank: int) -> list[int]:
    """Best-path durations (frames per label) via constrained Viterbi.

    Each frame of the best blank-augmented path is attributed to a label:
    label states map to their own label, blank states to the preceding
    label (leading blanks to the first label).
    """
    targets = list(targets)
    if not targets:
        raise InfeasibleAlignmentError("cannot align an empty label sequence")
    t_len = log_probs.shape[0]
    check_feasible(t_len, targets)
    ext = extended_states(targets, blank)
    s_len = len(ext)
    lp = log_probs.detach().to(torch.float64).cpu().numpy()

    import numpy as np

    neg_inf = -np.inf
    delta = np.full((t_len, s_len), neg_inf)
    back = np.zeros((t_len, s_len), dtype=np.int64)
    delta[0, 0] = lp[0, ext[0]]
    if s_len > 1:
        delta[0, 1] = lp[0, ext[1]]
    for t in range(1, t_len):
        for s in range(s_len):
            best, arg = delta[t - 1, s], s
            if s >= 1 and delta[t - 1, s - 1] > best:
                best, arg = delta[t - 1, s - 1], s - 1
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                if delta[t - 1, s - 2] > best:
                    best, arg = delta[t - 1, s - 2], s - 2
            delta[t, s] = best + lp[t, ext[s]]
            back[t, s] = arg
    ends = [s_len - 1] if s_len == 1 else [s_len - 1, s_len - 2]
    end = max(ends, key=lambda s: delta[t_len - 1, s])
    if not np.isfinite(delta[t_len - 1, end]):
        raise InfeasibleAlignmentError("no feasible alignment path")
    states = [end]
    for t in range(t_len - 1, 0, -1):
        states.append(int(back[t, states[-1]]))
    states.reverse()

    durations = [0] * len(targets)
    for s in states:
        if s % 2 == 1:
            label_idx = (s - 1) // 2
        elif s == 0:
            label_idx = 0
        else:
            label_idx = s // 2 - 1
        durations[label_idx] += 1
    return durations
