"""Compiled inner loops.

Transition structure is passed as CSR triples ``(ptr, idx, logp)`` with
``idx`` ascending inside each row, so a strict ``>`` comparison while
scanning yields the lowest-index argmax on ties.
"""

import numba as nb
import numpy as np

NEG_INF = -np.inf

_jit = nb.njit(cache=True, nogil=True)


@_jit
def viterbi_forward(emis, init, pred_ptr, pred_src, pred_logp, beam):
    """Max-product forward pass.

    ``delta[t, s]`` is the best log score of any path ending in ``s`` at
    frame ``t``, emissions up to and including ``t``.  Returns
    ``(delta, backptr, dead)`` where ``dead`` is the first frame with no
    surviving state, or -1.
    """
    T, S = emis.shape
    delta = np.full((T, S), NEG_INF)
    bp = np.zeros((T, S), dtype=np.int32)
    best = NEG_INF
    for s in range(S):
        delta[0, s] = init[s] + emis[0, s]
        if delta[0, s] > best:
            best = delta[0, s]
    if best == NEG_INF:
        return delta, bp, 0
    if beam > 0:
        for s in range(S):
            if delta[0, s] < best - beam:
                delta[0, s] = NEG_INF
    for t in range(1, T):
        frame_best = NEG_INF
        for s in range(S):
            v = NEG_INF
            arg = 0
            for k in range(pred_ptr[s], pred_ptr[s + 1]):
                cand = delta[t - 1, pred_src[k]] + pred_logp[k]
                if cand > v:
                    v = cand
                    arg = pred_src[k]
            bp[t, s] = arg
            if v > NEG_INF:
                v += emis[t, s]
            delta[t, s] = v
            if v > frame_best:
                frame_best = v
        if frame_best == NEG_INF:
            return delta, bp, t
        if beam > 0:
            for s in range(S):
                if delta[t, s] < frame_best - beam:
                    delta[t, s] = NEG_INF
    return delta, bp, -1


@_jit
def backtrack(bp, last):
    T = bp.shape[0]
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = last
    for t in range(T - 1, 0, -1):
        path[t - 1] = bp[t, path[t]]
    return path


@_jit
def _argmax_first(vec):
    best = NEG_INF
    arg = 0
    for i in range(vec.shape[0]):
        if vec[i] > best:
            best = vec[i]
            arg = i
    return arg, best


@_jit
def lbp_acoustic(joint, other, pdf_own, pdf_other, n_pdfs, out):
    """Acoustic message for one speaker given the other's fw+bw messages.

    ``joint`` is laid out ``[t, own pdf, other pdf]`` (the caller passes a
    transposed copy for speaker b) and ``other[t, s]`` holds ``fw + bw`` of
    the fixed speaker.  Writes the max-normalized per-state message into
    ``out``.  Returns the first frame whose message is entirely -inf, or -1.
    """
    T = joint.shape[0]
    S_own = out.shape[1]
    u = np.empty(n_pdfs)
    m = np.empty(n_pdfs)
    for t in range(T):
        u[:] = NEG_INF
        for s in range(other.shape[1]):
            v = other[t, s]
            if v > u[pdf_other[s]]:
                u[pdf_other[s]] = v
        for i in range(n_pdfs):
            best = NEG_INF
            row = joint[t, i]
            for j in range(n_pdfs):
                cand = row[j] + u[j]
                if cand > best:
                    best = cand
            m[i] = best
        top = NEG_INF
        for s in range(S_own):
            v = m[pdf_own[s]]
            out[t, s] = v
            if v > top:
                top = v
        if top == NEG_INF:
            return t
        for s in range(S_own):
            out[t, s] -= top
    return -1


@_jit
def lbp_pdf_acoustic(joint, other, pdf_other, n_pdfs):
    """Acoustic message over PDFs (not graph states), unnormalized.

    ``joint`` is laid out ``[t, own pdf, other pdf]`` as in ``lbp_acoustic``.
    """
    T = joint.shape[0]
    out = np.full((T, n_pdfs), NEG_INF)
    u = np.empty(n_pdfs)
    for t in range(T):
        u[:] = NEG_INF
        for s in range(other.shape[1]):
            if other[t, s] > u[pdf_other[s]]:
                u[pdf_other[s]] = other[t, s]
        for i in range(n_pdfs):
            best = NEG_INF
            for j in range(n_pdfs):
                cand = joint[t, i, j] + u[j]
                if cand > best:
                    best = cand
            out[t, i] = best
    return out


@_jit
def lbp_forward(ac, init, pred_ptr, pred_src, pred_logp, out, arg):
    """Forward messages: ``fw[t, s] = max_p trans(p, s) + fw[t-1, p] + ac[t-1, p]``."""
    T, S = ac.shape
    top = NEG_INF
    for s in range(S):
        out[0, s] = init[s]
        arg[0, s] = 0
        if init[s] > top:
            top = init[s]
    if top == NEG_INF:
        return 0
    for s in range(S):
        out[0, s] -= top
    for t in range(1, T):
        top = NEG_INF
        for s in range(S):
            v = NEG_INF
            a = 0
            for k in range(pred_ptr[s], pred_ptr[s + 1]):
                p = pred_src[k]
                cand = pred_logp[k] + out[t - 1, p] + ac[t - 1, p]
                if cand > v:
                    v = cand
                    a = p
            out[t, s] = v
            arg[t, s] = a
            if v > top:
                top = v
        if top == NEG_INF:
            return t
        for s in range(S):
            out[t, s] -= top
    return -1


@_jit
def lbp_backward(ac, succ_ptr, succ_dst, succ_logp, out, arg):
    """Backward messages: ``bw[t, s] = max_q trans(s, q) + bw[t+1, q] + ac[t+1, q]``."""
    T, S = ac.shape
    for s in range(S):
        out[T - 1, s] = 0.0
        arg[T - 1, s] = 0
    for t in range(T - 2, -1, -1):
        top = NEG_INF
        for s in range(S):
            v = NEG_INF
            a = 0
            for k in range(succ_ptr[s], succ_ptr[s + 1]):
                q = succ_dst[k]
                cand = succ_logp[k] + out[t + 1, q] + ac[t + 1, q]
                if cand > v:
                    v = cand
                    a = q
            out[t, s] = v
            arg[t, s] = a
            if v > top:
                top = v
        if top == NEG_INF:
            return t
        for s in range(S):
            out[t, s] -= top
    return -1


@_jit
def max_abs_change(old, new):
    """Largest change between two max-normalized log messages, measured on
    ``exp`` of the entries so that far-below-max tails count as zero.

    Returns NaN if ``new`` holds NaN or +inf entries.
    """
    worst = 0.0
    flat_old = old.ravel()
    flat_new = new.ravel()
    for i in range(flat_old.shape[0]):
        a = flat_old[i]
        b = flat_new[i]
        if b != b or b == np.inf:
            return np.nan
        if a == b:
            continue
        d = abs(np.exp(a) - np.exp(b))
        if d > worst:
            worst = d
    return worst


@_jit
def exact_joint_viterbi(joint, pdf, init, pred_ptr, pred_src, pred_logp):
    """Product-space Viterbi for two chains sharing one graph.

    The max over predecessor pairs is split into a max over the b
    predecessor followed by a max over the a predecessor, giving
    O(S * nnz) work per frame instead of O(nnz^2).
    Returns ``(delta_last, bp_a, bp_b, dead)``.
    """
    T = joint.shape[0]
    S = pdf.shape[0]
    bp_a = np.zeros((T, S, S), dtype=np.uint16)
    bp_b = np.zeros((T, S, S), dtype=np.uint16)
    delta = np.empty((S, S))
    stage = np.empty((S, S))
    best = NEG_INF
    for a in range(S):
        for b in range(S):
            v = init[a] + init[b] + joint[0, pdf[a], pdf[b]]
            delta[a, b] = v
            if v > best:
                best = v
    if best == NEG_INF:
        return delta, bp_a, bp_b, 0
    for t in range(1, T):
        # stage 1: stage[a', b] = max_{b'} delta[a', b'] + logp(b' -> b)
        for ap in range(S):
            for b in range(S):
                v = NEG_INF
                arg = 0
                for k in range(pred_ptr[b], pred_ptr[b + 1]):
                    cand = delta[ap, pred_src[k]] + pred_logp[k]
                    if cand > v:
                        v = cand
                        arg = pred_src[k]
                stage[ap, b] = v
                bp_b[t, ap, b] = arg
        # stage 2: delta[a, b] = max_{a'} stage[a', b] + logp(a' -> a)
        best = NEG_INF
        for a in range(S):
            pa = pdf[a]
            for b in range(S):
                v = NEG_INF
                arg = 0
                for k in range(pred_ptr[a], pred_ptr[a + 1]):
                    cand = stage[pred_src[k], b] + pred_logp[k]
                    if cand > v:
                        v = cand
                        arg = pred_src[k]
                bp_a[t, a, b] = arg
                if v > NEG_INF:
                    v += joint[t, pa, pdf[b]]
                delta[a, b] = v
                if v > best:
                    best = v
        if best == NEG_INF:
            return delta, bp_a, bp_b, t
    return delta, bp_a, bp_b, -1


@_jit
def exact_joint_backtrack(delta_last, bp_a, bp_b):
    T = bp_a.shape[0]
    S = delta_last.shape[0]
    best = NEG_INF
    la = 0
    lb = 0
    for a in range(S):
        for b in range(S):
            if delta_last[a, b] > best:
                best = delta_last[a, b]
                la = a
                lb = b
    path_a = np.empty(T, dtype=np.int64)
    path_b = np.empty(T, dtype=np.int64)
    path_a[T - 1] = la
    path_b[T - 1] = lb
    for t in range(T - 1, 0, -1):
        a_prev = bp_a[t, path_a[t], path_b[t]]
        path_b[t - 1] = bp_b[t, a_prev, path_b[t]]
        path_a[t - 1] = a_prev
    return path_a, path_b, best
