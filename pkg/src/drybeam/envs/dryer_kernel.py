"""Compiled explicit-Euler inner loop for the drying model.

This mirrors the readable numpy reference step in ``dryer.py`` (which is the
tested specification of the physics) and exists purely for speed: a module
span covers tens of thousands of sub-millisecond timesteps. Both paths share
the same finite-volume formulation, so their trajectories agree to roundoff;
an equivalence test keeps them locked together.

Parameter packing (see ``DryerParams.kernel_pack``):
  0 dz            6 k_dry        12 tau          18 h_fg (J/kg)
  1 rho_fb        7 k_wet        13 mw_v         19 thickness
  2 porosity      8 mob0         14 r_gas        20 basis weight
  3 rho_water     9 pca0         15 p_atm        21 boiling limit (C)
  4 c_water      10 pca_s0       16 y_cap        22 a_fiber
  5 cf_rf_1me    11 d_ap         17 rh_s0        23 a_water
                                                 24 ir coeff (eps*F*sigma)
                                                 25 ir emitter temp (K)

Status codes returned in ``out[0]``: 0 ok, 1 boiling guard, 2 saturation
out of range, 3 non-finite state. On a guard trip the step is not
committed, so the arrays always hold the last valid state.
"""

import numpy as np
from numba import njit

# Drying-rate enhancement polynomial in mean DBMC (degree 6, highest first).
DEP_POLY = (19133.0, -94421.0, 185596.0, -185349.0, 99171.0, -27003.0, 2952.4)


@njit(cache=True, nogil=True)
def dep_dre_value(m_d, fit_min, fit_max, percent_reading):
    """Enhancement fraction at mean DBMC ``m_d``, clamped to the fit range."""
    if m_d < fit_min:
        m_d = fit_min
    elif m_d > fit_max:
        m_d = fit_max
    value = 0.0
    for coeff in DEP_POLY:
        value = value * m_d + coeff
    if percent_reading:
        value /= 100.0
    if value < 0.0:
        value = 0.0
    return value


@njit(cache=True, nogil=True)
def integrate_span(
    T,
    M,
    n_steps,
    dt,
    p,
    h_conv,
    t_air_c,
    kc,
    c_air,
    is_dep,
    dep_percent,
    dep_fit_min,
    dep_fit_max,
    ir_on,
    out,
):
    """Advance (T, M) in place by ``n_steps`` explicit-Euler steps.

    out[0] status, out[1] steps committed, out[2] energy added (kJ/m2),
    out[3] net moisture mass leaving through the boundaries (kg/m2).
    """
    n = T.shape[0]
    dz = p[0]
    rho_fb = p[1]
    eps = p[2]
    rho_w = p[3]
    c_w = p[4]
    cf_rf_1me = p[5]
    k_dry = p[6]
    k_wet = p[7]
    mob0 = p[8]
    pca0 = p[9]
    pca_s0 = p[10]
    d_ap = p[11]
    tau = p[12]
    mw_v = p[13]
    r_gas = p[14]
    p_atm = p[15]
    y_cap = p[16]
    rh_s0 = p[17]
    h_fg = p[18]
    th = p[19]
    bw = p[20]
    boil_limit = p[21]
    a_f = p[22]
    a_w = p[23]
    ir_coeff = p[24]
    ir_temp_k = p[25]

    s_to_m = rho_fb / (eps * rho_w)  # saturation per unit DBMC

    sp = np.empty(n)
    psat = np.empty(n)
    rh = np.empty(n)
    conc = np.empty(n)
    pca = np.empty(n)
    cheat = np.empty(n)
    fm = np.zeros(n + 1)
    fe = np.zeros(n + 1)
    qir = np.zeros(n + 1)
    dM = np.empty(n)
    dT = np.empty(n)

    q_added = 0.0
    mass_out = 0.0
    steps_done = 0
    status = 0

    for _ in range(n_steps):
        # Cell properties from the current state.
        for i in range(n):
            s = M[i] * s_to_m
            if s < 0.0:
                s = 0.0
            elif s > 1.0:
                s = 1.0
            sp[i] = s
            t = T[i]
            psat[i] = 611.2 * np.exp(17.62 * t / (243.12 + t))
            rh[i] = 1.0 - np.exp(-s / rh_s0)
            conc[i] = rh[i] * psat[i] / (r_gas * (t + 273.15))
            pca[i] = pca0 * (1.0 - s) / (s + pca_s0)
            cheat[i] = c_w * rho_w * eps * s + cf_rf_1me

        # Interior interface fluxes (Fourier / Darcy / Fick), upwinded
        # enthalpy advection. Interface j sits between cells j-1 and j.
        for j in range(1, n):
            sbar = 0.5 * (sp[j - 1] + sp[j])
            k_if = k_dry + (k_wet - k_dry) * sbar
            q_cond = -k_if * (T[j] - T[j - 1]) / dz
            mob = mob0 * sbar * sbar * sbar
            j_w = mob * (pca[j] - pca[j - 1]) / dz
            d_eff = d_ap * eps * (1.0 - sbar) / tau
            pv = 0.5 * (rh[j - 1] * psat[j - 1] + rh[j] * psat[j])
            y_v = pv / p_atm
            if y_v > y_cap:
                y_v = y_cap
            j_v = -(d_eff * mw_v / (1.0 - y_v)) * (conc[j] - conc[j - 1]) / dz
            fm[j] = j_w + j_v
            t_up_w = T[j - 1] if j_w > 0.0 else T[j]
            t_up_v = T[j - 1] if j_v > 0.0 else T[j]
            fe[j] = q_cond + j_w * (c_w * t_up_w) + j_v * (c_w * t_up_v + h_fg)

        # Bottom boundary: adiabatic and impermeable (contact conductance
        # term unused; the sheet rests on a low-Biot plate).
        fm[0] = 0.0
        fe[0] = 0.0

        # Top boundary: convection plus evaporation into the module's air.
        t_top = T[n - 1]
        y_s = rh[n - 1] * psat[n - 1] / p_atm
        if y_s > y_cap:
            y_s = y_cap
        dre_mult = 1.0
        if is_dep:
            mean_m = 0.0
            for i in range(n):
                mean_m += M[i]
            mean_m /= n
            dre_mult = 1.0 + dep_dre_value(mean_m, dep_fit_min, dep_fit_max, dep_percent)
        j_vo = kc * (mw_v / (1.0 - y_s)) * (conc[n - 1] - c_air) * dre_mult
        fm[n] = j_vo
        fe[n] = h_conv * (t_top - t_air_c) + j_vo * (c_w * t_top + h_fg)

        # Infrared penetration: surface flux attenuated cell by cell
        # (Bouguer), absorption blended between fiber and water by
        # saturation. qir[j] is the downward flux crossing interface j.
        if ir_on:
            t_top_k = t_top + 273.15
            q_surf = ir_coeff * (ir_temp_k**4 - t_top_k**4)
            if q_surf < 0.0:
                q_surf = 0.0
            qir[n] = q_surf
            for j in range(n - 1, -1, -1):
                a_cell = sp[j] * a_w + (1.0 - sp[j]) * a_f
                qir[j] = qir[j + 1] * np.exp(-a_cell * dz)

        # Explicit Euler update in flux form (discretely conservative).
        ok = True
        for i in range(n):
            dM[i] = -(fm[i + 1] - fm[i]) * dt / (rho_fb * dz)
            source = -(fe[i + 1] - fe[i]) / dz + (qir[i + 1] - qir[i]) / dz
            dT[i] = source * dt / cheat[i]
            t_new = T[i] + dT[i]
            m_new = M[i] + dM[i]
            if not (np.isfinite(t_new) and np.isfinite(m_new)):
                status = 3
                ok = False
                break
            if t_new >= boil_limit:
                status = 1
                ok = False
                break
            s_new = m_new * s_to_m
            if s_new < -1e-12 or s_new > 1.0 + 1e-9:
                status = 2
                ok = False
                break
        if not ok:
            break

        dm_mean = 0.0
        dt_mean = 0.0
        s_mean = 0.0
        for i in range(n):
            M[i] += dM[i]
            T[i] += dT[i]
            dm_mean += dM[i]
            dt_mean += dT[i]
            s_mean += M[i] * s_to_m
        dm_mean /= n
        dt_mean /= n
        s_mean /= n
        if s_mean > 1.0:
            s_mean = 1.0
        elif s_mean < 0.0:
            s_mean = 0.0

        # Energy bookkeeping (kJ/m2): latent removal plus sensible storage.
        q_added += -dm_mean * bw * (h_fg / 1000.0) + dt_mean * th * (
            c_w * rho_w * eps * s_mean + cf_rf_1me
        ) / 1000.0
        mass_out += (fm[n] - fm[0]) * dt
        steps_done += 1

    out[0] = float(status)
    out[1] = float(steps_done)
    out[2] = q_added
    out[3] = mass_out
