"""Pure-Python integration kernel (fallback for the compiled extension).

One call advances the whole converter bank by n_sub fixed steps: attack
evaluation on the delivered control channels, droop + first-order filter
dynamics, consensus update, waveform synthesis into the per-agent ring
buffers, and the per-sample detection counters.  The compiled kernel in
_kernel.pyx implements the same arithmetic in the same operation order, so
both produce bit-identical trajectories; keep any change mirrored there.

Parameter-matrix columns (one row per agent):
  0 k_p  1 k_q  2 omega0  3 v0  4 z_pu  5 theta  6 s_base
  7 t_filter  8 t_power  9 v_sat  10 h_gain  11 leader_flag
  12 dv_secondary (static voltage correction folded into the delivered V_s)
Attack-matrix columns (one row per spec):
  0 agent  1 channel(0=p,1=q,2=ws,3=vs,4=mod)  2 kind(0=scal,1=add,2=ramp)
  3 magnitude  4 t_a  5 t_a'  6 periodic(0/1)  7 period
Detection features: 0..10 state residuals, 11 voltage limits,
12 frequency limits, 13 THD (maintained by the caller).
"""

import math

N_STATES = 11
N_FEATURES = 14
N_PAR = 13

OK = 0
DIVERGED = 1


def run_chunk(X, xsec, theta_wf, wf_buf, wf_pos,
              counters, streak_start, first_exceed, flag_step, flag_feature,
              env_flag, noise, par, adj, in_set, inverter_on, monitored,
              attacks, x0, base_mean, base_half,
              v_lo, v_hi, w_lo, w_hi,
              persistence, detect_on, detect_from_step,
              w_nom, v_g, clip_pu, dt, step0, n_sub, wf_per_step):
    n = X.shape[0]
    m = attacks.shape[0]
    wf_len = wf_buf.shape[1]
    dt_wf = dt / wf_per_step

    x = X.tolist()
    xs = list(xsec.tolist())
    thw = list(theta_wf.tolist())
    a = attacks.tolist()
    p = par.tolist()
    adj_l = adj.tolist()
    mean_l = base_mean.tolist()
    half_l = base_half.tolist()
    noise_l = noise[:, :, step0:step0 + n_sub].tolist() if detect_on else None
    cnt = counters.tolist()
    sstart = streak_start.tolist()
    fexc = first_exceed.tolist()
    fstep = flag_step.tolist()
    ffeat = flag_feature.tolist()

    status = OK
    bad_agent = -1
    bad_state = -1

    for k in range(n_sub):
        step = step0 + k
        t = step * dt

        # Consensus inputs from the pre-step states.
        u_c = [0.0] * n
        for i in range(n):
            if not in_set[i]:
                continue
            xi = xs[i]
            acc = 0.0
            row = adj_l[i]
            for j in range(n):
                aij = row[j]
                if aij != 0.0:
                    acc += aij * (xi - xs[j])
            u_c[i] = -p[i][10] * acc - p[i][10] * p[i][11] * (xi - x0)

        dX = [None] * n
        for i in range(n):
            pi = p[i]
            kp = pi[0]; kq = pi[1]; w0 = pi[2]; v0 = pi[3]
            z = pi[4]; theta = pi[5]; sbase = pi[6]
            tf = pi[7]; tpq = pi[8]; vsat = pi[9]
            xi = x[i]
            beta = xi[0]; vod = xi[1]; voq = xi[2]
            iod = xi[3]; ioq = xi[4]; id_ = xi[5]; iq = xi[6]
            P = xi[7]; Q = xi[8]; w = xi[9]; V = xi[10]

            # Delivered control-path channels, manipulated by active specs.
            p_meas = P
            q_meas = Q
            ws = w0 + xs[i]
            vs = v0 + pi[12]
            for r in range(m):
                ar = a[r]
                if ar[0] != i:
                    continue
                ta = ar[4]; tb = ar[5]
                if ar[6] != 0.0:
                    if t < ta:
                        continue
                    trel = math.fmod(t - ta, ar[7])
                    if trel > tb - ta:
                        continue
                else:
                    if t < ta or t > tb:
                        continue
                    trel = t - ta
                ch = int(ar[1]); kind = int(ar[2]); mag = ar[3]
                if ch == 0:
                    p_meas = _apply(kind, mag, p_meas, trel)
                elif ch == 1:
                    q_meas = _apply(kind, mag, q_meas, trel)
                elif ch == 2:
                    ws = _apply(kind, mag, ws, trel)
                elif ch == 3:
                    vs = _apply(kind, mag, vs, trel)
                else:  # modulation vector: both components, pu magnitudes
                    if kind == 0:
                        ws = (1.0 + mag) * ws
                        vs = (1.0 + mag) * vs
                    elif kind == 1:
                        ws = ws + mag * w0
                        vs = vs + mag * v0
                    else:
                        ws = ws + mag * w0 * trel
                        vs = vs + mag * v0 * trel

            if inverter_on[i]:
                ppu = (v_g * V / z) * math.cos(theta - beta) \
                    - (v_g * v_g / z) * math.cos(theta)
                qpu = (v_g * V / z) * math.sin(theta - beta) \
                    - (v_g * v_g / z) * math.sin(theta)
                d_P = (ppu * sbase - P) / tpq
                d_Q = (qpu * sbase - Q) / tpq
                wcmd = ws - kp * p_meas
                vcmd = vs - kq * q_meas
                if vcmd < 0.0:
                    vcmd = 0.0
                elif vcmd > vsat:
                    vcmd = vsat
                d_w = (wcmd - w) / tf
                d_V = (vcmd - V) / tf
                d_beta = w - w_nom
                v_div = V if V > 1e-6 else 1e-6
                iod_t = ppu / v_div
                ioq_t = -qpu / v_div
                d_vod = (V - vod) / tf
                d_voq = -voq / tf
                d_iod = (iod_t - iod) / tf
                d_ioq = (ioq_t - ioq) / tf
                d_id = (iod - id_) / tf
                d_iq = (ioq - iq) / tf
            else:
                d_P = -P / tpq
                d_Q = -Q / tpq
                d_w = (w_nom - w) / tf
                d_V = -V / tf
                d_beta = 0.0
                d_vod = -vod / tf
                d_voq = -voq / tf
                d_iod = -iod / tf
                d_ioq = -ioq / tf
                d_id = -id_ / tf
                d_iq = -iq / tf

            # Waveform sub-samples from the pre-step phasor.
            pos = wf_pos + k * wf_per_step
            for s in range(wf_per_step):
                thw[i] += w * dt_wf
                if inverter_on[i]:
                    val = V * math.sin(thw[i] + beta)
                    if val > clip_pu:
                        val = clip_pu
                    elif val < -clip_pu:
                        val = -clip_pu
                else:
                    val = 0.0
                wf_buf[i, (pos + s) % wf_len] = val

            dX[i] = (d_beta, d_vod, d_voq, d_iod, d_ioq, d_id, d_iq,
                     d_P, d_Q, d_w, d_V)

        # Synchronous Euler update.
        for i in range(n):
            xi = x[i]
            di = dX[i]
            for j in range(N_STATES):
                xi[j] += dt * di[j]
            if in_set[i]:
                xs[i] += dt * u_c[i]

        # Divergence and envelope checks on the post-step state.
        for i in range(n):
            xi = x[i]
            for j in range(N_STATES):
                if not math.isfinite(xi[j]):
                    status = DIVERGED
                    bad_agent = i
                    bad_state = j
                    break
            if status == DIVERGED:
                break
            w_new = xi[9]
            if w_new < 0.5 * w_nom or w_new > 1.5 * w_nom:
                env_flag[i] = 1
        if status == DIVERGED:
            n_sub = k + 1
            break

        # Threshold detection with persistence filtering.
        if detect_on and step >= detect_from_step:
            sample = step + 1
            for i in range(n):
                if not monitored[i]:
                    continue
                xi = x[i]
                ni = noise_l[i]
                for f in range(13):
                    if f < N_STATES:
                        y = xi[f] + ni[f][k]
                        out = abs(y - mean_l[i][f]) > half_l[i][f]
                    elif f == 11:
                        y = xi[10] + ni[10][k]
                        out = y < v_lo or y > v_hi
                    else:
                        y = xi[9] + ni[9][k]
                        out = y < w_lo or y > w_hi
                    if out:
                        if cnt[i][f] == 0:
                            sstart[i][f] = sample
                        cnt[i][f] += 1
                        if cnt[i][f] == persistence:
                            if fexc[i][f] < 0:
                                fexc[i][f] = sstart[i][f]
                            if fstep[i] < 0:
                                fstep[i] = sample
                                ffeat[i] = f
                    else:
                        cnt[i][f] = 0
                        sstart[i][f] = -1

    for i in range(n):
        for j in range(N_STATES):
            X[i, j] = x[i][j]
        xsec[i] = xs[i]
        theta_wf[i] = thw[i]
        for f in range(N_FEATURES):
            counters[i, f] = cnt[i][f]
            streak_start[i, f] = sstart[i][f]
            first_exceed[i, f] = fexc[i][f]
        flag_step[i] = fstep[i]
        flag_feature[i] = ffeat[i]

    return (wf_pos + n_sub * wf_per_step) % wf_len, status, bad_agent, bad_state


def _apply(kind, mag, y, trel):
    if kind == 0:
        return (1.0 + mag) * y
    if kind == 1:
        return y + mag
    return y + mag * trel
