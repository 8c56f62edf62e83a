# app/services/experiment_runner.py
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.linalg import eigh, eigvalsh_tridiagonal

from app.core.config import resolve_threads
from app.core.errors import ConfigError, QuasiLabError
from app.core.logging import ExperimentLogger, get_logger
from app.db.run_store import RunStore
from app.schemas.experiment import ExperimentConfig, RunManifest
from app.schemas.frequency import CFExpansion, FrequencySpec
from app.schemas.operators import OperatorConfig, Window
from app.schemas.potential import Potential
from app.schemas.cocycles import FourierTable
from app.services.cocycles import lyapunov_finite, lyapunov_orbit, schrodinger_cocycle, strip_growth_scan
from app.services.diophantine import (
    beta_estimate,
    cf_expand,
    dc_check,
    resonance_gap_profile,
    resonances,
    scan_resonances,
    small_divisor_profile,
    strong_dc_check,
)
from app.services.holder import holder_scan, spectral_energies
from app.services.localization import localization_profile
from app.services.operators import (
    classify_regular,
    interval_uniformity,
    membership_A,
    resonant_intervals,
    scale_selection,
    tail_weight,
    truncate,
)
from app.services.reducibility import (
    bloch_lift,
    conjugation_residual,
    divisor_solve,
    model_X,
    pk_sequence,
)
from app.services.spectral import (
    duality_gap,
    ids,
    measure_interval,
    phase_measure,
    seminorm_check,
    shift_covariance,
    thouless_residual,
    tridiagonal,
    truncation_measure,
)
from app.services.weyl import herglotz_M, psi, psi_grid, pk_epsilon_pipeline, weyl_m_plus

logger = get_logger("experiment_runner")
experiment_logger = ExperimentLogger()

MATRIX_SIDECAR_LIMIT = 1000  # largest N whose dense block is written next to the spectrum
PSI_BOUND_SLACK = 1e-6


def build_potential(config: ExperimentConfig) -> Potential:
    """Potential from potential_file, else from the 'potential' key"""
    kwargs = {key: getattr(config, key) for key in ("rho", "sigma") if getattr(config, key) is not None}
    if config.potential_file:
        try:
            text = Path(config.potential_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read potential file: {exc.strerror}", key="potential_file",
                              value=config.potential_file)
        try:
            return Potential.from_text(text, name=Path(config.potential_file).stem, **kwargs)
        except ValueError as exc:
            raise ConfigError(f"bad potential file: {exc}", key="potential_file", value=config.potential_file)

    name, _, payload = config.potential.partition(":")
    name = name.strip().lower()
    try:
        if name in ("amo", "almost_mathieu"):
            return Potential.almost_mathieu(**kwargs)
        if name == "geometric":
            parts = [p.strip() for p in payload.split(",") if p.strip()]
            K = int(parts[0]) if parts else 3
            ratio = float(parts[1]) if len(parts) > 1 else 0.5
            return Potential.geometric(K, ratio, **kwargs)
        return Potential.from_text(config.potential.replace(";", "\n"), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad potential: {exc}", key="potential", value=config.potential)


def build_frequency(config: ExperimentConfig) -> CFExpansion:
    try:
        spec = FrequencySpec.from_text(config.frequency, config.precision_bits)
    except ValueError as exc:
        raise ConfigError(f"bad frequency: {exc}", key="frequency", value=config.frequency)
    return cf_expand(spec, config.depth)


class ExperimentRunner:
    """Runs one subcommand against a resolved config and records its outputs"""

    def __init__(self, config: ExperimentConfig, store: RunStore, threads: Optional[int] = None):
        self.config = config
        self.store = store
        self.threads = resolve_threads(threads)
        self.stages: Dict[str, float] = {}
        self.warnings: List[str] = []
        self._cf: Optional[CFExpansion] = None
        self._operator: Optional[OperatorConfig] = None
        self.handlers: Dict[str, Callable[[], None]] = {
            "cf": self.run_cf,
            "beta": self.run_beta,
            "divisors": self.run_divisors,
            "dc": self.run_dc,
            "resonances": self.run_resonances,
            "spectrum": self.run_spectrum,
            "ids": self.run_ids,
            "measure": self.run_measure,
            "holder": self.run_holder,
            "lyapunov": self.run_lyapunov,
            "strip-growth": self.run_strip_growth,
            "weyl": self.run_weyl,
            "pk-scan": self.run_pk_scan,
            "duality": self.run_duality,
            "thouless": self.run_thouless,
            "uniformity": self.run_uniformity,
            "localize": self.run_localize,
            "bloch-defect": self.run_bloch_defect,
            "model-x": self.run_model_x,
            "covariance": self.run_covariance,
        }

    # -- plumbing ---------------------------------------------------------

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        yield
        elapsed = time.perf_counter() - start
        self.stages[name] = self.stages.get(name, 0.0) + elapsed
        experiment_logger.stage_completed(name, elapsed)

    @property
    def cf(self) -> CFExpansion:
        if self._cf is None:
            with self.stage("frequency"):
                self._cf = build_frequency(self.config)
        return self._cf

    @property
    def operator(self) -> OperatorConfig:
        if self._operator is None:
            potential = build_potential(self.config)
            self._operator = OperatorConfig(
                coupling=self.config.coupling,
                frequency=self.cf,
                phase=complex(self.config.phase),
                potential=potential,
            )
        return self._operator

    def energies(self) -> np.ndarray:
        if self.config.energies:
            return np.array(self.config.energies)
        if self.config.energy_count:
            return spectral_energies(self.operator, self.config.N, self.config.energy_count)
        return np.array([self.config.energy])

    def eps_grid(self) -> np.ndarray:
        if self.config.eps:
            return np.array(sorted(self.config.eps))
        c = self.config
        return np.logspace(math.log10(c.eps_min), math.log10(c.eps_max), c.eps_points)

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        experiment_logger.warning(message)

    def execute(self, command: str) -> RunManifest:
        """Run a subcommand; the manifest is written on success and on failure"""
        handler = self.handlers.get(command)
        if handler is None:
            raise ConfigError("unknown subcommand", key="subcommand", value=command)
        manifest = RunManifest(
            command=command,
            config_hash=self.config.config_hash(),
            config=self.config.model_dump(mode="json"),
            precision_bits=self.config.precision_bits,
            threads=self.threads,
        )
        experiment_logger.run_started(command, manifest.config_hash, manifest.precision_bits, self.threads)
        start = time.perf_counter()
        try:
            handler()
        except QuasiLabError as exc:
            manifest.status = "failed"
            manifest.error = exc.to_dict()
            raise
        finally:
            manifest.wall_seconds = time.perf_counter() - start
            manifest.stages = dict(self.stages)
            manifest.warnings = list(self.warnings)
            self.store.write_manifest(manifest)
        experiment_logger.run_completed(command, str(self.store.root), manifest.wall_seconds)
        return manifest

    # -- diophantine ------------------------------------------------------

    def run_cf(self) -> None:
        cf = self.cf
        self.store.write_json("cf.json", cf.to_report())
        rows = []
        for n in range(cf.depth + 1):
            a_n = cf.partial_quotients[n - 1] if n >= 1 else 0
            gap = float(cf.gaps[n]) if n < cf.depth else None
            rows.append((n, a_n, str(cf.p[n]), str(cf.q[n]), gap))
        self.store.write_csv("convergents.csv", ["n", "a_n", "p_n", "q_n", "gap"], rows,
                             expected_rows=cf.depth + 1)

    def run_beta(self) -> None:
        profile = beta_estimate(self.cf)
        self.store.write_json("beta.json", profile)
        rows = [(n, r, t) for n, (r, t) in enumerate(zip(profile.ratios, profile.tail_sup))]
        self.store.write_csv("beta.csv", ["n", "log_q_next_over_q", "tail_sup"], rows,
                             expected_rows=profile.depth_used)

    def run_divisors(self) -> None:
        c = self.config
        with self.stage("profile"):
            profile = small_divisor_profile(self.cf, c.theta, c.K, epsilon0=c.eps0)
        rows = list(zip(profile.ks, profile.norm_k, profile.norm_shift))
        self.store.write_csv("divisors.csv", ["k", "norm_k_alpha", "norm_2theta_minus_k_alpha"], rows,
                             expected_rows=2 * c.K)

        # a sample solve with the potential table as right-hand side
        b_hat = FourierTable(coefficients=self.operator.potential.coefficients)
        small = [int(k) for k, d in zip(profile.ks, profile.norm_shift) if d < c.floor]
        excluded = sorted(set(c.excluded) | set(small))
        with self.stage("solve"):
            solution = divisor_solve(b_hat, c.theta, self.cf, excluded, c.K, c.floor)
            residual = conjugation_residual(b_hat, solution.table(), c.theta, self.cf)
        kept = [k for k in range(-residual.half_width, residual.half_width + 1) if k not in excluded]
        self.store.write_json("divisors.json", {
            "beta_hat": profile.beta_hat,
            "c_fitted": profile.c_fitted,
            "c_resonant": profile.c_resonant,
            "excluded": excluded,
            "min_divisor": solution.min_divisor,
            "w_bound": solution.w_bound,
            "residual_max": max((abs(residual.coefficient(k)) for k in kept), default=0.0),
        })

    def run_dc(self) -> None:
        c = self.config
        self.store.write_json("dc.json", {
            "power": dc_check(self.cf, c.kappa, c.tau, c.K),
            "strong": strong_dc_check(self.cf, c.kappa, c.tau, c.K),
        })

    def run_resonances(self) -> None:
        c = self.config
        with self.stage("enumerate"):
            sequence = resonances(c.theta, self.cf, c.eps0, c.K)
        beta = beta_estimate(self.cf).beta_hat if self.cf.depth >= 2 else 0.0
        profile = resonance_gap_profile(sequence, beta)
        rows = [(j, n_j, float(g)) for j, (n_j, g) in enumerate(zip(sequence.resonances, sequence.gaps))]
        self.store.write_csv("resonances.csv", ["j", "n_j", "gap"], rows, expected_rows=len(sequence.resonances))
        self.store.write_json("resonances.json", {"sequence": sequence.to_report(), "gap_profile": profile})

    # -- operators and spectra --------------------------------------------

    def run_spectrum(self) -> None:
        c = self.config
        cfg = self.operator
        window = Window.centered(c.N)
        with self.stage("eigensolve"):
            diagonal, off = tridiagonal(cfg, window)
            values = eigvalsh_tridiagonal(diagonal, off)
        self.store.write_csv("spectrum.csv", ["i", "E"], list(enumerate(values)), expected_rows=window.size)
        if c.N <= MATRIX_SIDECAR_LIMIT:
            self.store.write_matrix("block", truncate(cfg, window, "schrodinger"))
        else:
            self.warn(f"matrix sidecar skipped for N={c.N} > {MATRIX_SIDECAR_LIMIT}")
        p = cfg.potential
        self.store.write_json("spectrum.json", {
            "potential": p.to_report(),
            "tail_weights": [tail_weight(p, k) for k in range(p.half_width + 2)],
            "min": float(values[0]),
            "max": float(values[-1]),
            "bound": 2 + abs(cfg.coupling) * p.sup_norm,
        })

    def run_ids(self) -> None:
        c = self.config
        cfg = self.operator
        if c.energies:
            grid = np.array(c.energies)
        else:
            reach = 2 + abs(cfg.coupling) * cfg.potential.sup_norm + 0.5
            grid = np.linspace(-reach, reach, c.grid)
        with self.stage("ids"):
            values = ids(cfg, grid, c.N, c.phase_avg, self.threads)
        values = np.atleast_1d(values)
        self.store.write_csv("ids.csv", ["E", "N_E"], list(zip(grid, values)), expected_rows=grid.size)

    def run_measure(self) -> None:
        c = self.config
        cfg = self.operator
        with self.stage("measure"):
            if c.measure_vectors == "phase":
                measure = phase_measure(cfg, c.N)
            else:
                measure = truncation_measure(cfg, c.vector(), c.N)
        rows = list(zip(measure.energies, measure.weights))
        self.store.write_csv("atoms.csv", ["E", "w"], rows, expected_rows=measure.energies.size)

        summary = {
            "half_width": c.N,
            "total_mass": measure.total_mass,
            "resolution_floor": measure.resolution_floor,
            "truncation_error": measure.truncation_error,
        }
        vector = c.vector()
        if c.measure_vectors == "f" and len(vector) >= 2:
            sites = sorted(vector)
            f = {sites[0]: vector[sites[0]]}
            g = {n: vector[n] for n in sites[1:]}
            edges = np.linspace(measure.energies[0] - 1e-9, measure.energies[-1] + 1e-9, c.grid + 1)
            summary["seminorm"] = seminorm_check(cfg, f, g, list(zip(edges[:-1], edges[1:])), c.N)
        self.store.write_json("measure.json", summary)

    def run_holder(self) -> None:
        c = self.config
        cfg = self.operator
        energies = self.energies()
        epsilons = self.eps_grid()
        f = None if c.measure_vectors == "phase" else [c.vector()]
        with self.stage("scan"):
            report = holder_scan(cfg, energies, epsilons, c.N, c.phase, f=f)
        rows = [(r.energy, r.epsilon, r.mass, r.ratio, r.below_resolution) for r in report.rows]
        self.store.write_csv("holder.csv", ["E", "eps", "mu", "ratio", "below_resolution"], rows,
                             expected_rows=energies.size * epsilons.size)
        if report.filtered:
            self.warn(f"{report.filtered} (E, eps) pairs below the resolution floor {report.floor:.3e}")
        self.store.write_json("holder.json", {
            "global_sup": report.global_sup,
            "decade_sups": report.decade_sups,
            "exponents": report.exponents,
            "filtered": report.filtered,
            "floor": report.floor,
        })

    # -- cocycles ---------------------------------------------------------

    def run_lyapunov(self) -> None:
        c = self.config
        cfg = self.operator
        rows = []
        for E in self.energies():
            cocycle = schrodinger_cocycle(cfg.frequency, cfg.coupling, float(E), cfg.potential)
            with self.stage("products"):
                estimate = lyapunov_finite(cocycle, c.n, c.grid, self.threads)
                orbit = lyapunov_orbit(cocycle, c.phase, c.n)
            rows.append((float(E), c.n, estimate.value, estimate.standard_error, estimate.doubled_value,
                         estimate.subadditive, orbit))
        self.store.write_csv("lyapunov.csv", ["E", "n", "L_n", "stderr", "L_2n", "subadditive", "orbit"], rows,
                             expected_rows=len(rows))

    def run_strip_growth(self) -> None:
        c = self.config
        cfg = self.operator
        cocycle = schrodinger_cocycle(cfg.frequency, cfg.coupling, c.energy, cfg.potential)
        with self.stage("scan"):
            report = strip_growth_scan(cocycle, c.eta, c.n_list, c.grid, c.strips, self.threads)
        rows = [(r.epsilon, r.n, r.rate) for r in report.rows]
        self.store.write_csv("strip_growth.csv", ["eps", "n", "rate"], rows,
                             expected_rows=c.strips * len(set(c.n_list)))
        self.store.write_json("strip_growth.json", {
            "eta": report.eta, "final_rate": report.final_rate, "monotone": report.monotone,
        })

    def run_pk_scan(self) -> None:
        c = self.config
        cfg = self.operator
        with self.stage("pipeline"):
            table = pk_epsilon_pipeline(cfg, c.phase, c.energy, c.k_max)
            sequence = pk_sequence(schrodinger_cocycle(cfg.frequency, cfg.coupling, c.energy, cfg.potential),
                                   c.phase, c.k_max)
        rows = [(r.k, r.epsilon, r.psi, r.scaled_norm, r.ratio, r.normalized_psi, r.epsilon_ratio)
                for r in table.rows]
        self.store.write_csv("pk.csv", ["k", "eps_k", "psi", "scaled_norm", "ratio", "psi_sqrt_eps", "eps_ratio"],
                             rows, expected_rows=c.k_max)
        self.store.write_json("pk.json", {
            "ratio_min": table.ratio_min,
            "ratio_max": table.ratio_max,
            "normalized_psi_max": table.normalized_psi_max,
            "epsilon_ratio_min": table.epsilon_ratio_min,
            "positive_definite": sequence.positive_definite,
            "monotone": sequence.monotone,
            "trace_bound": sequence.trace_bound,
            "epsilon_decreasing": sequence.epsilon_decreasing,
            "log_scaled": sequence.log_scaled,
        })

    def run_model_x(self) -> None:
        c = self.config
        rows = []
        with self.stage("products"):
            for k in c.n_list:
                report = model_X(c.theta, c.r, c.t_hat, self.cf, k, c.phase)
                rows.append((k, report.norm, report.inverse_norm, report.inverse_norm / k, report.shape_a,
                             report.shape_b, report.empirical_exponent, report.corner_error))
        self.store.write_csv("model_x.csv", ["k", "norm", "inverse_norm", "inverse_over_k", "shape_a", "shape_b",
                                             "exponent", "corner_error"], rows, expected_rows=len(c.n_list))

    # -- Weyl and Herglotz ------------------------------------------------

    def run_weyl(self) -> None:
        c = self.config
        cfg = self.operator
        energies, epsilons = self.energies(), self.eps_grid()
        z = (energies[:, None] + 1j * epsilons[None, :]).ravel()
        with self.stage("recursion"):
            weyl = weyl_m_plus(cfg, z, c.tol)
        with self.stage("measure"):
            measure = phase_measure(cfg, c.N)

        rows, violations = [], 0
        for zi, m_plus in zip(z, weyl.values):
            M = herglotz_M(measure, zi)
            bound = psi(m_plus)
            lower = measure_interval(measure, zi.real, zi.imag).value / (2 * zi.imag)
            within_bound = abs(M) <= bound * (1 + PSI_BOUND_SLACK)
            violations += not within_bound
            rows.append((zi.real, zi.imag, M.real, M.imag, m_plus.real, m_plus.imag, bound, psi_grid(m_plus),
                         lower, M.imag >= lower, within_bound))
        if violations:
            self.warn(f"|M| <= psi(m+) failed at {violations} of {len(rows)} samples")
        self.store.write_csv("weyl.csv", ["E", "eps", "re_M", "im_M", "re_m", "im_m", "psi", "psi_grid",
                                          "mass_over_2eps", "herglotz_bound", "psi_bound"],
                             rows, expected_rows=z.size)
        self.store.write_json("weyl.json", {"depth": weyl.depth, "samples": z.size, "psi_violations": violations})

    # -- duality and Thouless ---------------------------------------------

    def run_duality(self) -> None:
        c = self.config
        with self.stage("eigensolve"):
            report = duality_gap(self.operator, c.N, c.phases, c.min_gap, self.threads)
        rows = [(g.lower, g.upper, g.dual_lower, g.dual_upper, g.mismatch) for g in report.gaps]
        self.store.write_csv("duality_gaps.csv", ["lower", "upper", "dual_lower", "dual_upper", "mismatch"], rows,
                             expected_rows=len(report.gaps))
        self.store.write_json("duality.json", {
            "half_width": report.half_width, "phases": report.phases,
            "distance": report.distance, "edge_states": report.edge_states,
        })

    def run_thouless(self) -> None:
        c = self.config
        rows = []
        for E in self.energies():
            with self.stage("thouless"):
                report = thouless_residual(self.operator, float(E), c.N, c.n_lyapunov, c.grid, self.threads)
            rows.append((report.energy, report.lyapunov, report.log_potential, report.residual, report.nearest_atom))
        self.store.write_csv("thouless.csv", ["E", "L_n", "log_potential", "residual", "nearest_atom"], rows,
                             expected_rows=len(rows))

    def run_covariance(self) -> None:
        c = self.config
        with self.stage("measures"):
            report = shift_covariance(self.operator, c.k, c.N)
        self.store.write_json("covariance.json", report)

    # -- uniformity, localization and Bloch lifts -------------------------

    def _first_resonance(self) -> int:
        c = self.config
        found, _ = scan_resonances(c.theta, self.cf, c.eps0, c.k)
        nonzero = [n for n in found if n != 0]
        return nonzero[0] if nonzero else 1

    def run_uniformity(self) -> None:
        c = self.config
        cf = self.cf
        n_j = c.n_j or self._first_resonance()
        selection = scale_selection(c.k, cf)
        first, second = resonant_intervals(c.k, n_j, selection.q_n, selection.s)
        with self.stage("uniformity"):
            report = interval_uniformity(c.theta, c.k, n_j, cf, c.M)

        summary = {"n_j": n_j, "selection": selection, "intervals": [first, second], "uniformity": report}
        if c.coupling != 0:
            size = 6 * selection.s * selection.q_n - 1
            r = -math.log(abs(c.coupling)) - c.eps0
            js = np.concatenate((first.indices(), second.indices()))
            with self.stage("membership"):
                members = [membership_A(self.operator, size, r, c.theta + int(j) * cf.alpha_float,
                                        c.energy / c.coupling).member
                           for j in js]
            summary["membership"] = {"N": size, "r": r, "members": int(sum(members)), "total": len(members)}
        self.store.write_json("uniformity.json", summary)

    def run_localize(self) -> None:
        c = self.config
        rng = np.random.default_rng(c.seed)
        thetas = rng.random(c.trials)
        rows, medians, fractions, unfitted = [], [], [], 0
        for trial, theta in enumerate(thetas):
            with self.stage("profile"):
                report = localization_profile(self.operator, float(theta), c.N, c.eps0, c.eps1)
            medians.append(report.median_rate)
            fractions.append(report.violation_fraction)
            unfitted += report.unfitted
            for v in report.vectors:
                for fit in v.regions:
                    lower, upper = fit.region
                    rows.append((trial, report.theta, v.index, v.energy, v.anchor, lower, upper, fit.fitted,
                                 fit.decay_rate, fit.sites, fit.fitted_sites, fit.violations))
        self.store.write_csv("localization.csv", ["trial", "theta", "index", "E", "anchor", "region_lower",
                                                  "region_upper", "fitted", "rate", "sites", "fitted_sites",
                                                  "violations"], rows,
                             expected_rows=len(rows))
        if unfitted:
            experiment_logger.warning("Eigenvectors without a fittable gap", unfitted=unfitted)
        target = 0.5 * math.log(1 / abs(c.coupling)) if 0 < abs(c.coupling) < 1 else None
        self.store.write_json("localization.json", {
            "median_rate": float(np.median(medians)),
            "violation_fraction": float(np.mean(fractions)),
            "unfitted": unfitted,
            "target_rate": target,
            "regularity": self._regularity_sample(float(thetas[0])),
        })

    def _dual_eigenvector(self, theta: float):
        c = self.config
        window = Window.centered(c.N)
        block = truncate(self.operator.with_phase(theta), window, "dual")
        values, vectors = eigh(block.matrix)
        index = int(np.argmin(np.abs(values - c.energy)))
        return window, float(values[index]), vectors[:, index]

    def _regularity_sample(self, theta: float) -> Optional[dict]:
        """Regularity of the centre site of the dual eigenvector nearest to the configured energy"""
        c = self.config
        if c.coupling == 0:
            return None
        window, energy, vector = self._dual_eigenvector(theta)
        size = max(4, c.N // 8)
        report = classify_regular(self.operator.with_phase(theta), vector, window, 0, max(c.eps1, 1e-3), size,
                                  energy / c.coupling)
        return report.model_dump(mode="json")

    def run_bloch_defect(self) -> None:
        c = self.config
        window, energy, vector = self._dual_eigenvector(c.theta)
        half = c.window or c.N // 2
        inner = Window.centered(half)
        u_hat = vector[window.position(inner.start):window.position(inner.end) + 1]
        with self.stage("lift"):
            defect = bloch_lift(self.operator, c.theta, energy, u_hat, inner, data=vector, data_window=window,
                                eta=c.eta, grid=c.grid)
        rows = [(int(k), g.real, g.imag, b.real, b.imag)
                for k, g, b in zip(defect.ks, defect.g_direct, defect.g_boundary)]
        self.store.write_csv("bloch_defect.csv", ["k", "re_g", "im_g", "re_boundary", "im_boundary"], rows,
                             expected_rows=defect.ks.size)
        self.store.write_json("bloch_defect.json", {
            "energy": energy, "window": inner, "agreement": defect.agreement,
            "checked": defect.checked, "sup_norm": defect.sup_norm,
        })
