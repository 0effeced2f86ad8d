# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled integration kernel.

Mirror of _kernel_py.run_chunk, operation for operation, so the compiled and
pure-Python paths produce bit-identical trajectories (the extension is built
with -ffp-contract=off to keep fused multiply-adds from breaking parity).
See _kernel_py for the layout of the parameter and attack matrices.
"""

from libc.math cimport cos, sin, fmod, fabs, isfinite

import numpy as np

N_STATES = 11
N_FEATURES = 14
N_PAR = 13

OK = 0
DIVERGED = 1


cdef inline double _apply(int kind, double mag, double y, double trel) nogil:
    if kind == 0:
        return (1.0 + mag) * y
    if kind == 1:
        return y + mag
    return y + mag * trel


def run_chunk(double[:, ::1] X, double[::1] xsec, double[::1] theta_wf,
              double[:, ::1] wf_buf, int wf_pos,
              long long[:, ::1] counters, long long[:, ::1] streak_start,
              long long[:, ::1] first_exceed, long long[::1] flag_step,
              long long[::1] flag_feature, unsigned char[::1] env_flag,
              double[:, :, ::1] noise, double[:, ::1] par,
              double[:, ::1] adj, unsigned char[::1] in_set,
              unsigned char[::1] inverter_on, unsigned char[::1] monitored,
              double[:, ::1] attacks, double x0,
              double[:, ::1] base_mean, double[:, ::1] base_half,
              double v_lo, double v_hi, double w_lo, double w_hi,
              int persistence, int detect_on, long long detect_from_step,
              double w_nom, double v_g, double clip_pu, double dt,
              long long step0, int n_sub, int wf_per_step):
    cdef int n = X.shape[0]
    cdef int m = attacks.shape[0]
    cdef int wf_len = wf_buf.shape[1]
    cdef double dt_wf = dt / wf_per_step

    cdef int status = OK
    cdef int bad_agent = -1
    cdef int bad_state = -1

    cdef double[:, ::1] dX = np.empty((n, 11), dtype=np.float64)
    cdef double[::1] u_c = np.empty(n, dtype=np.float64)

    cdef int k, i, j, r, s, ch, kind, f, pos
    cdef long long step, sample
    cdef double t, xi_v, acc, aij
    cdef double kp, kq, w0, v0, z, theta, sbase, tf, tpq, vsat
    cdef double beta, vod, voq, iod, ioq, id_, iq, P, Q, w, V
    cdef double p_meas, q_meas, ws, vs, ta, tb, trel, mag
    cdef double ppu, qpu, d_P, d_Q, wcmd, vcmd, d_w, d_V, d_beta
    cdef double v_div, iod_t, ioq_t, d_vod, d_voq, d_iod, d_ioq, d_id, d_iq
    cdef double val, y, w_new
    cdef bint out, active

    for k in range(n_sub):
        step = step0 + k
        t = step * dt

        for i in range(n):
            u_c[i] = 0.0
            if not in_set[i]:
                continue
            xi_v = xsec[i]
            acc = 0.0
            for j in range(n):
                aij = adj[i, j]
                if aij != 0.0:
                    acc += aij * (xi_v - xsec[j])
            u_c[i] = -par[i, 10] * acc - par[i, 10] * par[i, 11] * (xi_v - x0)

        for i in range(n):
            kp = par[i, 0]; kq = par[i, 1]; w0 = par[i, 2]; v0 = par[i, 3]
            z = par[i, 4]; theta = par[i, 5]; sbase = par[i, 6]
            tf = par[i, 7]; tpq = par[i, 8]; vsat = par[i, 9]
            beta = X[i, 0]; vod = X[i, 1]; voq = X[i, 2]
            iod = X[i, 3]; ioq = X[i, 4]; id_ = X[i, 5]; iq = X[i, 6]
            P = X[i, 7]; Q = X[i, 8]; w = X[i, 9]; V = X[i, 10]

            p_meas = P
            q_meas = Q
            ws = w0 + xsec[i]
            vs = v0 + par[i, 12]
            for r in range(m):
                if attacks[r, 0] != i:
                    continue
                ta = attacks[r, 4]; tb = attacks[r, 5]
                if attacks[r, 6] != 0.0:
                    if t < ta:
                        continue
                    trel = fmod(t - ta, attacks[r, 7])
                    if trel > tb - ta:
                        continue
                else:
                    if t < ta or t > tb:
                        continue
                    trel = t - ta
                ch = <int> attacks[r, 1]; kind = <int> attacks[r, 2]
                mag = attacks[r, 3]
                if ch == 0:
                    p_meas = _apply(kind, mag, p_meas, trel)
                elif ch == 1:
                    q_meas = _apply(kind, mag, q_meas, trel)
                elif ch == 2:
                    ws = _apply(kind, mag, ws, trel)
                elif ch == 3:
                    vs = _apply(kind, mag, vs, trel)
                else:
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
                ppu = (v_g * V / z) * cos(theta - beta) \
                    - (v_g * v_g / z) * cos(theta)
                qpu = (v_g * V / z) * sin(theta - beta) \
                    - (v_g * v_g / z) * sin(theta)
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

            pos = wf_pos + k * wf_per_step
            for s in range(wf_per_step):
                theta_wf[i] += w * dt_wf
                if inverter_on[i]:
                    val = V * sin(theta_wf[i] + beta)
                    if val > clip_pu:
                        val = clip_pu
                    elif val < -clip_pu:
                        val = -clip_pu
                else:
                    val = 0.0
                wf_buf[i, (pos + s) % wf_len] = val

            dX[i, 0] = d_beta; dX[i, 1] = d_vod; dX[i, 2] = d_voq
            dX[i, 3] = d_iod; dX[i, 4] = d_ioq; dX[i, 5] = d_id
            dX[i, 6] = d_iq; dX[i, 7] = d_P; dX[i, 8] = d_Q
            dX[i, 9] = d_w; dX[i, 10] = d_V

        for i in range(n):
            for j in range(11):
                X[i, j] += dt * dX[i, j]
            if in_set[i]:
                xsec[i] += dt * u_c[i]

        for i in range(n):
            for j in range(11):
                if not isfinite(X[i, j]):
                    status = DIVERGED
                    bad_agent = i
                    bad_state = j
                    break
            if status == DIVERGED:
                break
            w_new = X[i, 9]
            if w_new < 0.5 * w_nom or w_new > 1.5 * w_nom:
                env_flag[i] = 1
        if status == DIVERGED:
            n_sub = k + 1
            break

        if detect_on and step >= detect_from_step:
            sample = step + 1
            for i in range(n):
                if not monitored[i]:
                    continue
                for f in range(13):
                    if f < 11:
                        y = X[i, f] + noise[i, f, step]
                        out = fabs(y - base_mean[i, f]) > base_half[i, f]
                    elif f == 11:
                        y = X[i, 10] + noise[i, 10, step]
                        out = y < v_lo or y > v_hi
                    else:
                        y = X[i, 9] + noise[i, 9, step]
                        out = y < w_lo or y > w_hi
                    if out:
                        if counters[i, f] == 0:
                            streak_start[i, f] = sample
                        counters[i, f] += 1
                        if counters[i, f] == persistence:
                            if first_exceed[i, f] < 0:
                                first_exceed[i, f] = streak_start[i, f]
                            if flag_step[i] < 0:
                                flag_step[i] = sample
                                flag_feature[i] = f
                    else:
                        counters[i, f] = 0
                        streak_start[i, f] = -1

    return (wf_pos + n_sub * wf_per_step) % wf_len, status, bad_agent, bad_state
