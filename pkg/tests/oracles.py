"""Independent reference implementations used as test oracles.

Everything here is written from the model definitions in plain Python, with
no calls into the package's planners, simulator or metrics.
"""
import itertools
import math


def snap(b, step=0.25):
    return math.floor(b / step + 1e-9) * step


def quality(params, kbps):
    mbps = kbps / 1000.0
    return mbps if params.quality_map == "linear-mbps" else math.log1p(mbps)


def chunk_q(params, kbps, stall, prev_kbps):
    a = quality(params, kbps)
    sw = 0.0 if prev_kbps is None else abs(a - quality(params, prev_kbps))
    return params.alpha * a - params.beta * stall - params.gamma * sw


def expectimax(state, video, params, dist, h, weights, stalls, step=0.25):
    """Best expected weighted QoE over explicit histories, snapping like the planner."""
    cap, L = state.buffer_cap_s, video.chunk_duration_s
    levels = sorted(set([0.0] + [float(s) for s in stalls]))

    def rec(k, b, last, b_true):
        if k == h:
            return 0.0
        best = -math.inf
        for s in levels:
            if s > 0 and b_true + s > cap + 1e-9:
                continue
            for lvl in range(video.n_levels):
                total = 0.0
                for t, p in dist.bins[k][lvl]:
                    a = b + s
                    stall = s + max(t - a, 0.0)
                    nb = snap(min(max(a - t, 0.0) + L, cap), step)
                    prev = None if last is None else video.ladder[last]
                    q = chunk_q(params, video.ladder[lvl], stall, prev)
                    total += p * (weights[k] * q + rec(k + 1, nb, lvl, nb))
                best = max(best, total)
        return best

    return rec(0, snap(min(state.buffer_s, cap), step), state.last_bitrate_idx, state.buffer_s)


def play_constant(video, bw_bps, bitrate_idx, intentional, cap=15.0):
    """Spreadsheet-style timeline on a constant-rate link.

    Returns per-chunk stalls and the wall-clock end of playback.
    """
    L = video.chunk_duration_s
    t_free = 0.0          # when the link can start the next download
    play_end = 0.0        # when buffered content runs out
    started = False
    stalls = []
    for i, (lvl, s) in enumerate(zip(bitrate_idx, intentional)):
        size = video.chunk_sizes[i][lvl]
        done = t_free + size / bw_bps
        # playback of chunk i may start once chunk i-1 drained and the pause elapsed
        ready = (play_end if started else 0.0) + s
        start = max(ready, done)
        stalls.append(start - (play_end if started else 0.0))
        started = True
        play_end = start + L
        # next download waits while the buffer would exceed its cap
        t_free = max(done, play_end - cap)
    return stalls, play_end


def brute_offline_constant(video, bw_bps, params, weights, stalls=(0.0, 1.0, 2.0), cap=15.0):
    """Best weighted QoE over all (level, stall) sequences, exact dynamics."""
    best, best_seq = -math.inf, None
    choices = [(lvl, s) for s in sorted(stalls) for lvl in range(video.n_levels)]
    for seq in itertools.product(choices, repeat=video.chunk_count):
        idx = [c[0] for c in seq]
        ints = [c[1] for c in seq]
        st = stalls_for(video, bw_bps, idx, ints, cap)
        if st is None:
            continue
        v = weighted_value(params, video, idx, st, weights)
        if v > best + 1e-12:
            best, best_seq = v, (tuple(idx), tuple(ints))
    return best, best_seq


def stalls_for(video, bw_bps, idx, ints, cap):
    """Per-chunk stalls under the virtual-buffer recurrence; None if a stall overfills."""
    b, L, out = 0.0, video.chunk_duration_s, []
    for i, (lvl, s) in enumerate(zip(idx, ints)):
        if s > 0 and b + s > cap + 1e-9:
            return None
        t = video.chunk_sizes[i][lvl] / bw_bps
        a = b + s
        out.append(s + max(t - a, 0.0))
        b = min(max(a - t, 0.0) + L, cap)
    return out


def weighted_value(params, video, idx, stalls, weights):
    total, prev = 0.0, None
    for i, (lvl, st) in enumerate(zip(idx, stalls)):
        kbps = video.ladder[lvl]
        total += weights[i] * chunk_q(params, kbps, st, prev)
        prev = kbps
    return total


def pearson_def(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


def average_ranks(x):
    """Rank i = 1 + #smaller + (#equal - 1) / 2."""
    return [1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x]


def spearman_def(x, y):
    return pearson_def(average_ranks(x), average_ranks(y))


def discordant_def(truth, pred):
    total = bad = 0
    for key in truth:
        algs = list(truth[key])
        for i in range(len(algs)):
            for j in range(i + 1, len(algs)):
                a, b = algs[i], algs[j]
                dt = truth[key][a] - truth[key][b]
                dp = pred[key][a] - pred[key][b]
                st = (dt > 0) - (dt < 0)
                sp = (dp > 0) - (dp < 0)
                total += 1
                bad += st != sp
    return bad / total
