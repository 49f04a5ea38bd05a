"""The full dock-and-score procedure for one ligand."""

from __future__ import annotations

from ..molmodel.types import Ligand, Pocket
from .pocket import chem_score
from .search import Searcher, cluster_and_select, flatten, start_transforms
from .types import DockResult, ScoringConfig


def dock_and_score(pocket: Pocket, ligand: Ligand, config: ScoringConfig | None = None) -> DockResult:
    """Flatten, search from every restart, cluster, and rescore the survivors.

    ``ligand`` must carry embedded coordinates, hydrogens and torsions.
    The result is a pure function of the inputs.
    """
    config = config or ScoringConfig()
    flat, angles = flatten(ligand, ligand.coords, config.flatten_sweeps)
    Q, T = start_transforms(ligand, flat, pocket, config.restarts)
    poses, evals = Searcher(pocket, ligand, config).run_batch(Q, T, angles)
    survivors = cluster_and_select(poses, config.rmsd_threshold, config.rescored, ligand.heavy_mask)
    rescored = tuple(p.with_chem_score(chem_score(pocket, ligand, p.conformation)) for p in survivors)
    best = rescored[0]
    for pose in rescored[1:]:
        if pose.chem_score > best.chem_score:
            best = pose
    return DockResult(ligand.name, float(best.chem_score), best, len(poses), evals, rescored)
