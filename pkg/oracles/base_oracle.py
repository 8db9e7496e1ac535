"""
Base Oracle Framework for seqsense self-checks

Each oracle compares a library result against an independent reference
(quadrature, an analytic value, a brute-force recursion or a Monte-Carlo
estimate) and reports whether they agree within a stated tolerance.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional
import json
import logging

from seqsense.errors import SeqSenseError


@dataclass(frozen=True)
class OracleRow:
    """One comparison made by an oracle."""

    oracle: str
    case: str
    expected: float
    observed: float
    tolerance: float
    passed: bool


class BaseOracle(ABC):
    """Base class for all self-check oracles"""

    description: str = ""

    def __init__(self, name: str, workspace_path: Optional[Path] = None):
        self.name = name
        self.workspace_path = workspace_path or Path.cwd()
        self.logger = self._setup_logging()
        self.execution_log: List[Dict[str, Any]] = []

    def _setup_logging(self) -> logging.Logger:
        """Setup logging for the oracle"""
        logger = logging.getLogger(f"oracle.{self.name}")
        logger.setLevel(logging.INFO)

        if not logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
            handler.setFormatter(formatter)
            logger.addHandler(handler)

        return logger

    def log_execution(self, action: str, details: Optional[Dict[str, Any]] = None):
        """Log oracle execution for audit trail"""
        entry = {
            "timestamp": datetime.utcnow().isoformat(),
            "oracle": self.name,
            "action": action,
            "details": details or {},
        }
        self.execution_log.append(entry)
        self.logger.info(f"Action: {action}")

    def row(self, case: str, expected: float, observed: float, tolerance: float, passed: bool) -> OracleRow:
        result = OracleRow(self.name, case, float(expected), float(observed), float(tolerance), bool(passed))
        self.log_execution("compare", {"case": case, "expected": result.expected, "observed": result.observed,
                                       "passed": result.passed})
        return result

    @abstractmethod
    def check(self, seed: int, fast: bool) -> List[OracleRow]:
        """Run the comparisons; ``fast`` shrinks sample sizes for quick runs."""

    def execute(self, seed: int = 1, fast: bool = True, **kwargs) -> Dict[str, Any]:
        """Run the oracle and summarise the outcome"""
        self.log_execution("start", {"seed": seed, "fast": fast})
        try:
            rows = self.check(seed, fast)
        except SeqSenseError as exc:
            self.log_execution("error", {"error": str(exc)})
            return {"success": False, "error": str(exc), "rows": []}
        success = all(r.passed for r in rows)
        if not success:
            self.logger.warning("%d of %d comparisons failed", sum(not r.passed for r in rows), len(rows))
        return {"success": success, "rows": rows}

    def save_execution_log(self, output_path: Optional[Path] = None):
        """Save execution log to file"""
        if not output_path:
            output_path = self.workspace_path / f"logs/{self.name}_execution.json"

        output_path.parent.mkdir(parents=True, exist_ok=True)

        with open(output_path, 'w') as f:
            json.dump(self.execution_log, f, indent=2)

        self.logger.info(f"Execution log saved to {output_path}")


class OracleRegistry:
    """Registry to manage and discover oracles"""

    def __init__(self):
        self._oracles: Dict[str, BaseOracle] = {}

    def register(self, oracle: BaseOracle):
        """Register an oracle"""
        self._oracles[oracle.name] = oracle

    def get_oracle(self, name: str) -> Optional[BaseOracle]:
        """Get an oracle by name"""
        return self._oracles.get(name)

    def list_oracles(self) -> List[str]:
        """List all registered oracle names"""
        return list(self._oracles.keys())

    def execute_oracle(self, name: str, **kwargs) -> Dict[str, Any]:
        """Execute an oracle by name"""
        oracle = self.get_oracle(name)
        if not oracle:
            raise ValueError(f"Oracle '{name}' not found")

        return oracle.execute(**kwargs)


# Global oracle registry instance
oracle_registry = OracleRegistry()


def register_oracle(oracle_class):
    """Class decorator that registers one instance of the oracle"""
    oracle_registry.register(oracle_class())
    return oracle_class
