"""Experiment configuration: JSON files with CLI flag overrides."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core.loss import (LossSpec, glm_loss, huber_mean_loss, square_link,
                         synthetic_nonconvex_loss, tanh_link)

ALGORITHMS = ("spiderboost", "tree_spider", "recursive_reg", "jl_spiderboost")


@dataclass
class ExperimentConfig:
    algorithm: str
    grid_n: list[int]
    grid_d: list[int]
    grid_eps: list[float]
    delta: float
    seeds: list[int]
    out: str
    master_seed: int = 0
    loss: dict = field(default_factory=lambda: {"kind": "synthetic_nonconvex"})
    data: dict = field(default_factory=lambda: {"kind": "glm_fullrank"})
    rr: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    accountant_c: float = 1.0
    workers: int = 1
    timing: bool = False
    write_reports: bool = True

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not (self.grid_n and self.grid_d and self.grid_eps):
            raise ValueError("grid must be non-empty in n, d, and eps")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    def grid_points(self) -> list[tuple[int, int, int, float]]:
        """(grid_index, n, d, eps) in canonical (config-order) enumeration."""
        pts = []
        i = 0
        for n in self.grid_n:
            for d in self.grid_d:
                for eps in self.grid_eps:
                    pts.append((i, int(n), int(d), float(eps)))
                    i += 1
        return pts

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        grid = raw.get("grid", {})
        cfg = ExperimentConfig(
            algorithm=raw["algorithm"],
            grid_n=[int(v) for v in grid.get("n", raw.get("n", []))],
            grid_d=[int(v) for v in grid.get("d", raw.get("d", []))],
            grid_eps=[float(v) for v in grid.get("eps", raw.get("eps", []))],
            delta=float(raw["delta"]),
            seeds=[int(s) for s in raw["seeds"]],
            out=str(raw["out"]),
            master_seed=int(raw.get("master_seed", 0)),
            loss=dict(raw.get("loss", {"kind": "synthetic_nonconvex"})),
            data=dict(raw.get("data", {"kind": "glm_fullrank"})),
            rr=dict(raw.get("rr", {})),
            overrides=dict(raw.get("overrides", {})),
            accountant_c=float(raw.get("accountant_c", 1.0)),
            workers=int(raw.get("workers", 1)),
            timing=bool(raw.get("timing", False)),
            write_reports=bool(raw.get("write_reports", True)),
        )
        cfg.validate()
        return cfg

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return ExperimentConfig.from_dict(json.load(fh))


def build_loss(loss_cfg: dict, d: int) -> LossSpec:
    """Instantiate the configured loss at dimension d."""
    kind = loss_cfg.get("kind", "synthetic_nonconvex")
    normX = float(loss_cfg.get("normX", 1.0))
    if kind == "synthetic_nonconvex":
        return synthetic_nonconvex_loss(d, normX=normX)
    if kind == "glm_tanh":
        loss = glm_loss(tanh_link(), 1.0, 1.0, normX, d,
                        F0_hint=float(loss_cfg.get("F0", 1.0)))
        loss.name = "glm_tanh"
        return loss
    if kind == "glm_square":
        zmax = float(loss_cfg.get("zmax", 4.0))  # |z - y| range the L0 declaration covers
        loss = glm_loss(square_link(), zmax, 1.0, normX, d,
                        F0_hint=float(loss_cfg.get("F0", 1.0)))
        loss.name = "glm_square"
        return loss
    if kind == "huber_mean":
        loss = huber_mean_loss(float(loss_cfg.get("L0", 1.0)),
                               float(loss_cfg.get("L1", 1.0)), dim=d)
        if "F0" in loss_cfg:
            loss.F0_hint = float(loss_cfg["F0"])
        return loss
    raise ValueError(f"unknown loss kind {kind!r}")
