# app/services/selftest.py
"""Fast closed-form checks of the whole stack"""

import math
import tempfile
import time
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel

from app.core.errors import QuasiLabError
from app.core.logging import get_logger
from app.db.run_store import RunStore
from app.schemas.experiment import ExperimentConfig
from app.schemas.frequency import FrequencySpec
from app.schemas.operators import OperatorConfig
from app.schemas.potential import Potential
from app.services.cocycles import lyapunov_finite, schrodinger_cocycle
from app.services.diophantine import cf_expand, norm_dist
from app.services.experiment_runner import ExperimentRunner, build_potential
from app.services.reducibility import model_X, pk_sequence
from app.services.spectral import ids, measure_interval, truncation_measure
from app.services.weyl import psi, psi_grid, weyl_m_plus

logger = get_logger("selftest")

FIBONACCI = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55]


class SelfTestCheck(BaseModel):
    name: str
    passed: bool
    detail: str
    seconds: float


class SelfTestReport(BaseModel):
    checks: List[SelfTestCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


class SelfTest:
    """Runs each check in isolation; a failing check never stops the others"""

    def __init__(self, potential_file: Optional[str] = None):
        self.potential_file = potential_file
        self.golden = cf_expand(FrequencySpec.golden(), 40)
        self.free = OperatorConfig(coupling=0.0, frequency=self.golden, potential=Potential.almost_mathieu())

    def checks(self) -> List[tuple]:
        items = [
            ("cf-golden-fibonacci", self.check_fibonacci),
            ("norm-dist-golden", self.check_norm_dist),
            ("psi-closed-form", self.check_psi),
            ("weyl-free-branch", self.check_weyl_free),
            ("ids-free-centre", self.check_ids_free),
            ("measure-mass", self.check_mass),
            ("measure-wide-interval", self.check_wide_interval),
            ("pk-rotation", self.check_pk_rotation),
            ("model-x-diagonal", self.check_model_x),
            ("lyapunov-hyperbolic", self.check_lyapunov),
            ("csv-determinism", self.check_determinism),
        ]
        if self.potential_file is not None:
            items.append(("potential-file", self.check_potential_file))
        return items

    def run(self) -> SelfTestReport:
        results = []
        for name, check in self.checks():
            results.append(self._run_one(name, check))
        return SelfTestReport(checks=results)

    def _run_one(self, name: str, check: Callable[[], str]) -> SelfTestCheck:
        start = time.perf_counter()
        try:
            detail = check()
            passed = True
        except AssertionError as exc:
            detail, passed = str(exc) or "assertion failed", False
        except QuasiLabError as exc:
            detail, passed = str(exc), False
        except Exception as exc:
            detail, passed = f"{type(exc).__name__}: {exc}", False
        seconds = time.perf_counter() - start
        logger.debug("Self-test check", check=name, passed=passed, seconds=round(seconds, 4))
        return SelfTestCheck(name=name, passed=passed, detail=detail, seconds=seconds)

    # -- checks -----------------------------------------------------------

    def check_fibonacci(self) -> str:
        cf = cf_expand(FrequencySpec.golden(), 10)
        assert list(cf.q[:10]) == FIBONACCI, f"q = {list(cf.q[:10])}"
        return "q_0..q_9 are Fibonacci numbers"

    def check_norm_dist(self) -> str:
        value = float(norm_dist(1, self.golden))
        expected = (3 - math.sqrt(5)) / 2
        assert abs(value - expected) < 1e-15, f"||alpha|| = {value}"
        return f"||alpha|| = {value:.16f}"

    def check_psi(self) -> str:
        assert abs(psi(1j) - 1) < 1e-15, "psi(i) != 1"
        assert abs(psi(2j) - 2) < 1e-12, "psi(2i) != 2"
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(20):
            z = complex(rng.normal(), rng.uniform(0.1, 3.0))
            worst = max(worst, abs(psi(z) - psi_grid(z)) / psi(z))
        assert worst < 1e-6, f"grid disagreement {worst:.2e}"
        return f"closed form vs grid within {worst:.1e}"

    def check_weyl_free(self) -> str:
        value = complex(weyl_m_plus(self.free, 2j).values[0])
        expected = 1j * (math.sqrt(2) - 1)
        assert abs(value - expected) < 1e-10, f"m+(2i) = {value}"
        return f"m+(2i) = {value.imag:.12f} i"

    def check_ids_free(self) -> str:
        value = ids(self.free, 0.0, 200)
        assert abs(value - 0.5) < 1e-2, f"N(0) = {value}"
        return f"N(0) = {value:.6f}"

    def check_mass(self) -> str:
        m = truncation_measure(self.free.with_coupling(0.5), {0: 1.0, 1: 1.0}, 100)
        assert abs(m.total_mass - 2) < 1e-10, f"total mass {m.total_mass}"
        assert np.all(m.weights >= -1e-15), "negative weight"
        return f"total mass {m.total_mass:.12f}"

    def check_wide_interval(self) -> str:
        cfg = self.free.with_coupling(0.5)
        m = truncation_measure(cfg, {0: 1.0}, 100)
        value = measure_interval(m, 0.3, 4.3 + cfg.coupling * cfg.potential.sup_norm).value
        assert abs(value - m.total_mass) < 1e-12, f"interval mass {value}"
        return "eps >= 4 + |E| captures the total mass"

    def check_pk_rotation(self) -> str:
        sequence = pk_sequence(schrodinger_cocycle(self.golden, 0.0, 0.0, Potential.almost_mathieu()), 0.0, 10)
        worst = max(abs(row.epsilon - 1 / (2 * row.k)) for row in sequence.rows)
        assert worst < 1e-12, f"eps_k off by {worst:.2e}"
        return "P_(k) = k I and eps_k = 1/(2k)"

    def check_model_x(self) -> str:
        report = model_X(0.1, 1, 0j, self.golden, 25)
        assert abs(report.norm - 25) < 1e-9 and abs(report.inverse_norm - 25) < 1e-9, "X != k I"
        return "t = 0 gives X = k I"

    def check_lyapunov(self) -> str:
        cocycle = schrodinger_cocycle(self.golden, 0.0, 3.0, Potential.almost_mathieu())
        value = lyapunov_finite(cocycle, 1000, 4).value
        expected = math.log((3 + math.sqrt(5)) / 2)
        assert abs(value - expected) < 1e-2, f"L = {value}"
        return f"L_1000(E=3) = {value:.6f}"

    def check_determinism(self) -> str:
        config = ExperimentConfig.build({"coupling": 0.3, "N": 40, "grid": 21})
        outputs = []
        with tempfile.TemporaryDirectory() as tmp:
            for label in ("a", "b"):
                store = RunStore(Path(tmp) / label)
                ExperimentRunner(config, store, threads=2).execute("ids")
                outputs.append((store.root / "ids.csv").read_bytes())
        assert outputs[0] == outputs[1], "ids.csv differs between runs"
        return "identical ids.csv across two runs"

    def check_potential_file(self) -> str:
        config = ExperimentConfig.build({"potential_file": self.potential_file})
        potential = build_potential(config)
        return f"{potential.half_width * 2 + 1} modes read"
