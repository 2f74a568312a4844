"""1-D transient finite-difference model of paper drying, as an environment.

The sheet is discretized into 24 finite-volume cells across its thickness.
Each cell carries temperature T (C) and local dry-basis moisture content M;
saturation s derives from M through the fiber loading. Mass moves by
capillary (Darcy) liquid flow and (Fick) vapor diffusion, heat by (Fourier)
conduction plus the enthalpy carried by the moving phases; infrared
irradiation penetrates the thickness with Bouguer attenuation. The bottom
surface is adiabatic and impermeable (the sheet rests on a low-Biot plate,
leaving the contact-conductance term unused); the top surface exchanges
heat with the module's air by convection and loses vapor through a
boundary-layer mass-transfer coefficient, multiplied by (1 + DRE) under a
dielectrophoresis module.

Many constitutive closures (effective conductivity, capillary pressure and
mobility, effective vapor diffusivity, per-module heat-transfer
coefficients, absorption coefficients, latent heat) are not pinned down by
published data for this testbed; the defaults live in one versioned
parameter file (``data/dryer_params.json``) and every acceptance-level check
is an invariant rather than an absolute-value reproduction.

Units: SI internally (J, kg, m, s, Pa), temperatures in Celsius, energy
accounting in kJ/m2 of sheet.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..actions import EpisodeConfig, N_ACTIONS, decode_action
from ..policy import Observation
from .base import EnvironmentContract, pack_state, unpack_state
from . import dryer_kernel

logger = logging.getLogger(__name__)

DRYER_STATE_VERSION = 1
STEFAN_BOLTZMANN = 5.670374419e-8
RHO_AIR_STD = 1.2041  # kg/m3 at 20 C, 1 atm
SCFM_TO_M3S = 4.719474e-4
R_AIR = 287.05

#: Drying-rate enhancement correlation coefficients (degree 6, highest first).
DEP_DRE_COEFFS = dryer_kernel.DEP_POLY

_SPEED_FACTORS = (0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75)
_SQP_ROWS = (
    # (machine speed m/s, normalized T_a, normalized V_a, energy kJ/m2)
    (0.0512, 0.9659, 1.0, 879.1134),
    (0.0482, 0.8853, 1.0, 874.8082),
    (0.0452, 0.8044, 1.0, 870.3372),
    (0.0422, 0.7232, 1.0, 865.6814),
    (0.0393, 0.6417, 1.0, 860.8234),
    (0.0363, 0.5596, 1.0, 855.7368),
    (0.0334, 0.4771, 1.0, 850.3909),
    (0.0304, 0.3938, 1.0, 844.7547),
    (0.0274, 0.3096, 1.0, 838.7919),
    (0.0244, 0.2244, 1.0, 832.4452),
    (0.0215, 0.1377, 1.0, 825.6498),
)

TRUNCATION_PENALTY = 1000.0


class PhysicsError(RuntimeError):
    pass


class SqpTableError(ValueError):
    """Speed factor outside the precomputed baseline table."""


@dataclass(frozen=True)
class SqpBaselineTable:
    """Precomputed minimum-energy baseline per speed factor."""

    speed_factors: tuple[float, ...] = _SPEED_FACTORS
    rows: tuple[tuple[float, float, float, float], ...] = _SQP_ROWS

    def energy(self, speed_factor: float) -> float:
        """Baseline energy, linearly interpolated between grid points."""
        sf = self.speed_factors
        if not sf[0] <= speed_factor <= sf[-1]:
            raise SqpTableError(
                f"speed factor {speed_factor} outside baseline table [{sf[0]}, {sf[-1]}]"
            )
        energies = [row[3] for row in self.rows]
        return float(np.interp(speed_factor, sf, energies))


SQP_TABLE = SqpBaselineTable()


def sqp_baseline_energy(speed_factor: float) -> float:
    return SQP_TABLE.energy(speed_factor)


def sparse_reward(
    module_index: int,
    terminated: bool,
    truncated: bool,
    energy_total: float,
    speed_factor: float,
    max_modules: int = 12,
) -> float:
    """Sparse episodic reward: energy saved vs. the baseline on success,
    an extra -1000 penalty when all modules are spent above the moisture
    target, zero otherwise (including mid-episode physics failures)."""
    if terminated:
        return sqp_baseline_energy(speed_factor) - energy_total
    if truncated and module_index >= max_modules:
        return sqp_baseline_energy(speed_factor) - energy_total - TRUNCATION_PENALTY
    return 0.0


def sf_to_vm(speed_factor: float, v_min: float = 0.006604, v_max: float = 0.06604) -> float:
    """Machine speed (m/s) for a speed factor: 1.0 is slowest, 0.0 fastest."""
    if not 0.0 <= speed_factor <= 1.0:
        raise ValueError(f"speed factor {speed_factor} outside [0, 1]")
    return v_min + (v_max - v_min) * (1.0 - speed_factor)


def dep_dre(m_d: float, percent_reading: bool = True, fit_min: float = 0.1, fit_max: float = 1.5) -> float:
    """Dielectrophoresis drying-rate enhancement fraction at mean DBMC.

    The degree-6 fit is only valid on [fit_min, fit_max]; values outside are
    clamped to the nearest endpoint (with a log warning). Under the default
    percent reading the polynomial value is divided by 100; negative values
    clamp to zero.
    """
    if m_d < fit_min or m_d > fit_max:
        logger.warning("DEP enhancement queried at DBMC %.3f outside fit range; clamping", m_d)
    return float(
        dryer_kernel.dep_dre_value(float(m_d), float(fit_min), float(fit_max), percent_reading)
    )


def ir_flux(absorption: np.ndarray, surface_flux: float, dz: float) -> np.ndarray:
    """Bouguer attenuation of the incident IR flux through the thickness.

    ``absorption[i]`` is the coefficient (1/m) of cell i (0 = bottom);
    returns the flux crossing each of the n+1 interfaces, with entry n the
    incident surface flux. Cell i absorbs flux[i+1] - flux[i].
    """
    absorption = np.asarray(absorption, dtype=float)
    n = absorption.size
    flux = np.zeros(n + 1)
    flux[n] = surface_flux
    for j in range(n - 1, -1, -1):
        flux[j] = flux[j + 1] * math.exp(-absorption[j] * dz)
    return flux


class DryerParams:
    """Constitutive constants loaded from the versioned parameter file."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.version = doc["params_version"]
        geo = doc["geometry"]
        self.n_nodes = geo["n_nodes"]
        self.thickness = geo["thickness_m"]
        self.chamber_length = geo["chamber_length_m"]
        self.n_module_slots = geo["n_module_slots"]
        self.basis_weight = geo["basis_weight_kg_m2"]
        self.dz = self.thickness / self.n_nodes
        self.rho_fb = self.basis_weight / self.thickness

        mach = doc["machine"]
        self.v_m_min = mach["v_m_min"]
        self.v_m_max = mach["v_m_max"]
        self.nozzle_area = mach["nozzle_area_m2"]
        self.airflow_scfm = mach["airflow_scfm"]

        mat = doc["material"]
        self.porosity = mat["porosity"]
        self.rho_water = mat["rho_water"]
        self.c_water = mat["c_water"]
        self.c_fiber = mat["c_fiber"]
        self.h_fg = mat["h_fg_kj_per_kg"] * 1000.0  # J/kg
        self.k_dry = mat["k_dry"]
        self.k_wet = mat["k_wet"]
        self.mob0 = mat["darcy_mobility_s"]
        self.pca0 = mat["capillary_p0_pa"]
        self.pca_s0 = mat["capillary_s0"]
        self.d_ap = mat["vapor_diffusivity_m2_s"]
        self.tortuosity = mat["tortuosity"]
        self.mw_v = mat["molar_mass_vapor"]
        self.r_gas = mat["gas_constant"]
        self.p_atm = mat["p_atm_pa"]
        self.y_cap = mat["vapor_mole_fraction_cap"]
        self.rh_s0 = mat["rh_rolloff_s"]
        self.a_fiber = mat["ir_absorption_fiber"]
        self.a_water = mat["ir_absorption_water"]
        # Fiber density implied by basis weight, thickness and porosity.
        self.rho_fiber = self.rho_fb / (1.0 - self.porosity)
        self.cf_rf_1me = self.c_fiber * self.rho_fiber * (1.0 - self.porosity)

        bc = doc["boundary"]
        self.h_conv = dict(bc["h_conv_w_m2k"])
        self.hot_air = dict(bc["hot_air_supply"])
        self.kc_per_h = bc["mass_transfer_per_h"]
        self.air_vapor_pressure = bc["air_vapor_pressure_pa"]
        self.air_ref_temp = bc["air_reference_temp_c"]
        self.contact_conductance = bc["contact_conductance_w_m2k"]  # dormant (h_i)
        self.belt_temp_c = bc["belt_temp_c"]  # dormant (T_su)

        ir = doc["ir"]
        self.ir_temp_c = ir["emitter_temp_c"]
        self.ir_view_factor = ir["view_factor"]
        self.ir_emissivity = ir["emissivity"]
        self.ir_zones = [tuple(zone) for zone in ir["zones_module_positions"]]

        dep = doc["dep"]
        self.dep_percent = dep["percent_reading"]
        self.dep_fit_min = dep["dbmc_fit_min"]
        self.dep_fit_max = dep["dbmc_fit_max"]

        num = doc["numerics"]
        self.dt = num["dt_s"]
        self.boiling_limit = num["boiling_limit_c"]
        self.stability_safety = num["stability_safety"]

        # Air vapor molar concentration seen by the top boundary (ambient
        # humidity; heating the supply air does not add vapor).
        self.c_air = self.air_vapor_pressure / (self.r_gas * (self.air_ref_temp + 273.15))

    @classmethod
    def default(cls) -> "DryerParams":
        text = resources.files("drybeam.data").joinpath("dryer_params.json").read_text()
        return cls(json.loads(text))

    @classmethod
    def load(cls, path) -> "DryerParams":
        with open(path) as fh:
            return cls(json.load(fh))

    def with_overrides(self, **overrides) -> "DryerParams":
        """Copy with dotted-path overrides, e.g. ``numerics.dt_s``."""
        doc = json.loads(json.dumps(self.doc))
        for key, value in overrides.items():
            section, _, name = key.partition(".")
            if not name:
                raise KeyError(f"override key {key!r} must be 'section.name'")
            doc[section][name] = value
        return DryerParams(doc)

    def saturation(self, dbmc) -> np.ndarray | float:
        return dbmc * self.rho_fb / (self.porosity * self.rho_water)

    def kernel_pack(self) -> np.ndarray:
        return np.array(
            [
                self.dz,
                self.rho_fb,
                self.porosity,
                self.rho_water,
                self.c_water,
                self.cf_rf_1me,
                self.k_dry,
                self.k_wet,
                self.mob0,
                self.pca0,
                self.pca_s0,
                self.d_ap,
                self.tortuosity,
                self.mw_v,
                self.r_gas,
                self.p_atm,
                self.y_cap,
                self.rh_s0,
                self.h_fg,
                self.thickness,
                self.basis_weight,
                self.boiling_limit,
                self.a_fiber,
                self.a_water,
                self.ir_emissivity * self.ir_view_factor * STEFAN_BOLTZMANN,
                self.ir_temp_c + 273.15,
            ]
        )

    def stability_limit(self) -> float:
        """Conservative explicit-Euler timestep bound dz^2 / (2 max D).

        The effective thermal diffusivity includes the latent cross-coupling
        through vapor diffusion down the saturation-vapor-curve slope; the
        moisture equation's capillary diffusivity is bounded separately.
        The maximum is scanned over the reachable (s, T) box.
        """
        s_grid = np.linspace(0.0, 1.0, 21)
        t_grid = np.linspace(20.0, self.boiling_limit - 0.5, 17)
        ds_dm = self.rho_fb / (self.porosity * self.rho_water)
        worst = 0.0
        for s in s_grid:
            c_heat = self.c_water * self.rho_water * self.porosity * s + self.cf_rf_1me
            k_eff = self.k_dry + (self.k_wet - self.k_dry) * s
            d_eff = self.d_ap * self.porosity * (1.0 - s) / self.tortuosity
            rh = 1.0 - math.exp(-s / self.rh_s0)
            for t in t_grid:
                psat = lambda tc: 611.2 * math.exp(17.62 * tc / (243.12 + tc))
                conc = lambda tc: rh * psat(tc) / (self.r_gas * (tc + 273.15))
                dcdt = conc(t + 0.5) - conc(t - 0.5)
                y_v = min(rh * psat(t) / self.p_atm, self.y_cap)
                k_latent = d_eff * self.mw_v / (1.0 - y_v) * dcdt * self.h_fg
                worst = max(worst, (k_eff + max(k_latent, 0.0)) / c_heat)
            # Capillary moisture diffusivity in DBMC space.
            dpca_ds = -self.pca0 * (1.0 + self.pca_s0) / (s + self.pca_s0) ** 2
            d_m = self.mob0 * s**3 * (-dpca_ds) * ds_dm / self.rho_fb
            worst = max(worst, d_m)
        return self.dz**2 / (2.0 * worst)


@dataclass
class ModuleBoundarySpec:
    """Boundary condition produced by one dryer module."""

    module_type: str
    air_temp_c: float
    h_conv: float
    mass_transfer: float  # kc, m/s
    air_velocity: float  # v_a = V_dot / (rho_a * A_nozzle)
    hot_air: bool
    dep_enhancement: bool
    ir_surface: bool = False
    contact_conductance: float = 0.0  # h_i, declared unused by the model
    belt_temp_c: float = 20.0  # T_su, declared unused by the model


def module_boundary(
    params: DryerParams, module_type: str, air_temp_c: float, ir_surface: bool = False
) -> ModuleBoundarySpec:
    """Boundary spec for a module type at an air temperature setting.

    DEP and SP modules block the hot-air supply and keep only natural
    convection; the air temperature they see is still the set temperature
    (continuity with the preceding module is enforced by the search
    constraints, not here).
    """
    h = params.h_conv[module_type]
    rho_a = params.p_atm / (R_AIR * (air_temp_c + 273.15))
    v_dot_std = params.airflow_scfm * SCFM_TO_M3S
    v_a = v_dot_std * (RHO_AIR_STD / rho_a) / params.nozzle_area
    hot = params.hot_air[module_type]
    return ModuleBoundarySpec(
        module_type=module_type,
        air_temp_c=air_temp_c,
        h_conv=h,
        mass_transfer=h * params.kc_per_h,
        air_velocity=v_a if hot else 0.0,
        hot_air=hot,
        dep_enhancement=module_type == "DEP",
        ir_surface=ir_surface,
        contact_conductance=params.contact_conductance,
        belt_temp_c=params.belt_temp_c,
    )


@dataclass
class PaperState:
    """Nodal state of the sheet plus episode bookkeeping."""

    temp_c: np.ndarray
    dbmc: np.ndarray
    position_x: float = 0.0
    elapsed_s: float = 0.0
    energy_kj: float = 0.0
    module_index: int = 0

    def mean_dbmc(self) -> float:
        return float(self.dbmc.mean())

    def mean_temp(self) -> float:
        return float(self.temp_c.mean())

    def copy(self) -> "PaperState":
        return PaperState(
            self.temp_c.copy(),
            self.dbmc.copy(),
            self.position_x,
            self.elapsed_s,
            self.energy_kj,
            self.module_index,
        )


def _cell_props(params: DryerParams, temp_c: np.ndarray, dbmc: np.ndarray):
    s = np.clip(params.saturation(dbmc), 0.0, 1.0)
    psat = 611.2 * np.exp(17.62 * temp_c / (243.12 + temp_c))
    rh = 1.0 - np.exp(-s / params.rh_s0)
    conc = rh * psat / (params.r_gas * (temp_c + 273.15))
    pca = params.pca0 * (1.0 - s) / (s + params.pca_s0)
    c_heat = params.c_water * params.rho_water * params.porosity * s + params.cf_rf_1me
    return s, psat, rh, conc, pca, c_heat


def compute_fluxes(
    params: DryerParams, temp_c: np.ndarray, dbmc: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior interface fluxes (q_cond, J_w, J_v), second order in space.

    Arrays have length n+1 (one entry per interface, cell i between
    interfaces i and i+1); the two boundary entries are zero here and are
    filled in by :func:`apply_boundaries`.
    """
    n = temp_c.size
    s, psat, rh, conc, pca, _ = _cell_props(params, temp_c, dbmc)
    q_cond = np.zeros(n + 1)
    j_w = np.zeros(n + 1)
    j_v = np.zeros(n + 1)
    sbar = 0.5 * (s[:-1] + s[1:])
    k_if = params.k_dry + (params.k_wet - params.k_dry) * sbar
    q_cond[1:n] = -k_if * np.diff(temp_c) / params.dz
    mob = params.mob0 * sbar**3
    j_w[1:n] = mob * np.diff(pca) / params.dz
    d_eff = params.d_ap * params.porosity * (1.0 - sbar) / params.tortuosity
    pv = 0.5 * (rh[:-1] * psat[:-1] + rh[1:] * psat[1:])
    y_v = np.minimum(pv / params.p_atm, params.y_cap)
    j_v[1:n] = -(d_eff * params.mw_v / (1.0 - y_v)) * np.diff(conc) / params.dz
    return q_cond, j_w, j_v


def apply_boundaries(
    params: DryerParams,
    temp_c: np.ndarray,
    dbmc: np.ndarray,
    boundary: ModuleBoundarySpec,
) -> tuple[float, float, np.ndarray]:
    """Boundary source terms: top outbound vapor flux, top outbound energy
    flux, and the IR flux profile across all interfaces.

    The bottom surface contributes nothing (adiabatic, impermeable, with the
    contact-conductance term dropped since T_su - T = 0)."""
    n = temp_c.size
    s, psat, rh, conc, _, _ = _cell_props(params, temp_c, dbmc)
    y_s = min(rh[-1] * psat[-1] / params.p_atm, params.y_cap)
    dre_mult = 1.0
    if boundary.dep_enhancement:
        dre_mult = 1.0 + dep_dre(
            float(np.mean(dbmc)), params.dep_percent, params.dep_fit_min, params.dep_fit_max
        )
    j_vo = (
        boundary.mass_transfer
        * (params.mw_v / (1.0 - y_s))
        * (conc[-1] - params.c_air)
        * dre_mult
    )
    e_out = boundary.h_conv * (temp_c[-1] - boundary.air_temp_c) + j_vo * (
        params.c_water * temp_c[-1] + params.h_fg
    )
    if boundary.ir_surface:
        t_top_k = temp_c[-1] + 273.15
        q_surf = max(
            params.ir_emissivity
            * params.ir_view_factor
            * STEFAN_BOLTZMANN
            * ((params.ir_temp_c + 273.15) ** 4 - t_top_k**4),
            0.0,
        )
        absorption = s * params.a_water + (1.0 - s) * params.a_fiber
        qir = ir_flux(absorption, q_surf, params.dz)
    else:
        qir = np.zeros(n + 1)
    return float(j_vo), float(e_out), qir


def integrate_step(
    params: DryerParams,
    temp_c: np.ndarray,
    dbmc: np.ndarray,
    boundary: ModuleBoundarySpec,
    dt: float,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """One explicit-Euler step of the coupled moisture/temperature system.

    Readable reference implementation; the compiled kernel reproduces it.
    Returns the new fields plus a diagnostics dict with the net boundary
    moisture flux (for the discrete mass-conservation identity) and a
    ``status`` mirroring the kernel's guard codes.
    """
    n = temp_c.size
    s, psat, rh, conc, pca, c_heat = _cell_props(params, temp_c, dbmc)
    q_cond, j_w, j_v = compute_fluxes(params, temp_c, dbmc)
    j_vo, e_out, qir = apply_boundaries(params, temp_c, dbmc, boundary)

    fm = j_w + j_v
    fe = np.zeros(n + 1)
    t_up_w = np.where(j_w[1:n] > 0.0, temp_c[:-1], temp_c[1:])
    t_up_v = np.where(j_v[1:n] > 0.0, temp_c[:-1], temp_c[1:])
    fe[1:n] = (
        q_cond[1:n]
        + j_w[1:n] * (params.c_water * t_up_w)
        + j_v[1:n] * (params.c_water * t_up_v + params.h_fg)
    )
    fm[n] = j_vo
    fe[n] = e_out

    d_dbmc = -np.diff(fm) * dt / (params.rho_fb * params.dz)
    d_temp = (-np.diff(fe) / params.dz + np.diff(qir) / params.dz) * dt / c_heat

    new_temp = temp_c + d_temp
    new_dbmc = dbmc + d_dbmc
    status = 0
    if not (np.all(np.isfinite(new_temp)) and np.all(np.isfinite(new_dbmc))):
        status = 3
    elif np.any(new_temp >= params.boiling_limit):
        status = 1
    else:
        s_new = params.saturation(new_dbmc)
        if np.any(s_new < -1e-12) or np.any(s_new > 1.0 + 1e-9):
            status = 2
    diag = {
        "status": status,
        "net_boundary_mass_flux": float(fm[n] - fm[0]),
        "boundary_energy_out": float(fe[n] - fe[0]),
    }
    if status != 0:
        return temp_c.copy(), dbmc.copy(), diag
    return new_temp, new_dbmc, diag


def energy_increment(
    params: DryerParams,
    dbmc_before: np.ndarray,
    dbmc_after: np.ndarray,
    temp_before: np.ndarray,
    temp_after: np.ndarray,
) -> float:
    """Energy accounting for one step, in kJ/m2.

    Latent term: -d(mean DBMC) * basis weight * h_fg; sensible term:
    d(mean T) * thickness * volumetric heat capacity at the current mean
    saturation."""
    d_m = float(np.mean(dbmc_after) - np.mean(dbmc_before))
    d_t = float(np.mean(temp_after) - np.mean(temp_before))
    s_mean = float(np.clip(np.mean(params.saturation(dbmc_after)), 0.0, 1.0))
    c_vol = params.c_water * params.rho_water * params.porosity * s_mean + params.cf_rf_1me
    return -d_m * params.basis_weight * (params.h_fg / 1000.0) + d_t * params.thickness * c_vol / 1000.0


class PaperDryerEnv(EnvironmentContract):
    """The drying simulation as a sequential 44-action environment.

    Each action configures the next module (type + air temperature); one
    step integrates the sheet's residence time under that module. Episodes
    terminate when mean DBMC reaches the target, truncate when all module
    slots are used while still above target, and truncate with a failure
    flag if the physics guards trip (boiling, invalid saturation).
    """

    def __init__(self, params: DryerParams | None = None, trace: bool = False):
        self.params = params or DryerParams.default()
        limit = self.params.stability_limit() * self.params.stability_safety
        if self.params.dt >= limit:
            raise ValueError(
                f"dt = {self.params.dt:.3e} s fails the explicit-stability "
                f"pre-check (limit {limit:.3e} s); lower numerics.dt_s"
            )
        self._pack = self.params.kernel_pack()
        self.trace_enabled = trace
        self.trace_rows: list[dict] = []
        self.config: EpisodeConfig | None = None
        self.state: PaperState | None = None
        self._v_m = 0.0
        self._q_baseline = 0.0
        self._last_reward = 0.0
        self._cumulative_reward = 0.0
        self._terminated = False
        self._truncated = False
        self._physics_failed = False

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    def cache_namespace(self) -> dict:
        return {
            "env": "dryer",
            "state_version": DRYER_STATE_VERSION,
            "params_version": self.params.version,
        }

    def reset(self, config: EpisodeConfig | None = None) -> Observation:
        self.config = config or EpisodeConfig()
        # The reward baseline only covers the tabulated speed range.
        self._q_baseline = sqp_baseline_energy(self.config.speed_factor)
        self._v_m = sf_to_vm(self.config.speed_factor, self.params.v_m_min, self.params.v_m_max)
        n = self.params.n_nodes
        self.state = PaperState(
            temp_c=np.full(n, float(self.config.initial_temp_c)),
            dbmc=np.full(n, float(self.config.initial_dbmc)),
        )
        self._last_reward = 0.0
        self._cumulative_reward = 0.0
        self._terminated = False
        self._truncated = False
        self._physics_failed = False
        self.trace_rows = []
        if self.trace_enabled:
            self._record_trace(0.0)
        return self._observation()

    def _observation(self) -> Observation:
        st = self.state
        return Observation(
            speed_factor=self.config.speed_factor,
            temp_top_c=float(st.temp_c[-1]),
            temp_bottom_c=float(st.temp_c[0]),
            dbmc_top=float(st.dbmc[-1]),
            dbmc_bottom=float(st.dbmc[0]),
            position=st.module_index,
        )

    def module_residence(self) -> tuple[float, float, int]:
        """(span length, exact residence time, inner step count)."""
        span = self.params.chamber_length / self.params.n_module_slots
        residence = span / self._v_m
        n_steps = max(1, math.ceil(residence / self.params.dt))
        return span, residence, n_steps

    def _ir_active(self, module_position: int) -> bool:
        if not self.config.ir_enabled:
            return False
        return any(module_position in zone for zone in self.params.ir_zones)

    def step(self, action: int):
        if self.done:
            raise RuntimeError("step() on a finished dryer episode")
        module_type, air_temp = decode_action(action)
        position = self.state.module_index + 1  # 1-based module slot
        boundary = module_boundary(
            self.params, module_type, float(air_temp), self._ir_active(position)
        )
        span, residence, n_steps = self.module_residence()
        dt_actual = residence / n_steps  # integrate the exact residence time

        out = np.zeros(4)
        status = 0
        if self.trace_enabled:
            # Chunked integration so trace rows sample within the module.
            chunks = 32
            per = max(1, n_steps // chunks)
            done_steps = 0
            while done_steps < n_steps and status == 0:
                take = min(per, n_steps - done_steps)
                status = self._run_kernel(boundary, take, dt_actual, out)
                done_steps += int(out[1])
                self.state.elapsed_s += int(out[1]) * dt_actual
                self.state.energy_kj += out[2]
                self._record_trace(out[2])
                if int(out[1]) < take:
                    break
        else:
            status = self._run_kernel(boundary, n_steps, dt_actual, out)
            self.state.elapsed_s += int(out[1]) * dt_actual
            self.state.energy_kj += out[2]

        self.state.position_x += span
        self.state.module_index += 1

        if status != 0:
            self._truncated = True
            self._physics_failed = True
        elif self.state.mean_dbmc() <= self.config.target_dbmc:
            self._terminated = True
        elif self.state.module_index >= self.config.max_modules:
            self._truncated = True

        self._last_reward = sparse_reward(
            self.state.module_index,
            self._terminated,
            self._truncated and not self._physics_failed,
            self.state.energy_kj,
            self.config.speed_factor,
            self.config.max_modules,
        )
        self._cumulative_reward += self._last_reward
        return self._observation(), self._last_reward, self._terminated, self._truncated

    def _run_kernel(self, boundary: ModuleBoundarySpec, n_steps: int, dt: float, out) -> int:
        dryer_kernel.integrate_span(
            self.state.temp_c,
            self.state.dbmc,
            n_steps,
            dt,
            self._pack,
            boundary.h_conv,
            boundary.air_temp_c,
            boundary.mass_transfer,
            self.params.c_air,
            boundary.dep_enhancement,
            self.params.dep_percent,
            self.params.dep_fit_min,
            self.params.dep_fit_max,
            boundary.ir_surface,
            out,
        )
        return int(out[0])

    def status(self):
        return self._observation(), self._last_reward, self.done

    def metrics(self) -> dict:
        return {
            "energy_kj_per_m2": self.state.energy_kj,
            "mean_dbmc": self.state.mean_dbmc(),
            "module_index": self.state.module_index,
            "physics_failed": self._physics_failed,
        }

    @property
    def terminated(self) -> bool:
        return self._terminated

    @property
    def truncated(self) -> bool:
        return self._truncated

    @property
    def physics_failed(self) -> bool:
        return self._physics_failed

    @property
    def cumulative_reward(self) -> float:
        return self._cumulative_reward

    def get_state(self) -> bytes:
        cfg = self.config
        st = self.state
        values = [
            cfg.speed_factor,
            cfg.initial_temp_c,
            cfg.initial_dbmc,
            cfg.target_dbmc,
            float(cfg.max_modules),
            float(cfg.ir_enabled),
            float(st.module_index),
            st.elapsed_s,
            st.position_x,
            st.energy_kj,
            self._last_reward,
            self._cumulative_reward,
            float(self._terminated),
            float(self._truncated),
            float(self._physics_failed),
        ]
        values.extend(st.temp_c.tolist())
        values.extend(st.dbmc.tolist())
        return pack_state(DRYER_STATE_VERSION, values)

    def set_state(self, data: bytes) -> None:
        values = unpack_state(DRYER_STATE_VERSION, data)
        n = self.params.n_nodes
        if values.size != 15 + 2 * n:
            raise ValueError("state length does not match node count")
        self.config = EpisodeConfig(
            speed_factor=float(values[0]),
            initial_temp_c=float(values[1]),
            initial_dbmc=float(values[2]),
            target_dbmc=float(values[3]),
            max_modules=int(values[4]),
            ir_enabled=bool(values[5]),
        )
        self._q_baseline = sqp_baseline_energy(self.config.speed_factor)
        self._v_m = sf_to_vm(self.config.speed_factor, self.params.v_m_min, self.params.v_m_max)
        self.state = PaperState(
            temp_c=values[15 : 15 + n].copy(),
            dbmc=values[15 + n :].copy(),
            position_x=float(values[8]),
            elapsed_s=float(values[7]),
            energy_kj=float(values[9]),
            module_index=int(values[6]),
        )
        self._last_reward = float(values[10])
        self._cumulative_reward = float(values[11])
        self._terminated = bool(values[12])
        self._truncated = bool(values[13])
        self._physics_failed = bool(values[14])
        self.trace_rows = []

    def _record_trace(self, dq: float) -> None:
        st = self.state
        self.trace_rows.append(
            {
                "time_s": st.elapsed_s,
                "position_m": st.position_x,
                "temp_mean_c": st.mean_temp(),
                "temp_top_c": float(st.temp_c[-1]),
                "temp_bottom_c": float(st.temp_c[0]),
                "dbmc_mean": st.mean_dbmc(),
                "dbmc_top": float(st.dbmc[-1]),
                "dbmc_bottom": float(st.dbmc[0]),
                "dq_kj_m2": dq,
            }
        )

    def export_trace(self, path) -> None:
        if not self.trace_rows:
            raise RuntimeError("tracing was not enabled for this episode")
        fields = list(self.trace_rows[0].keys())
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.trace_rows)
