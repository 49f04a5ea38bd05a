"""Deterministic synthetic inputs: SMILES libraries, pockets and timing samples."""

from __future__ import annotations

import math

import numpy as np

from .dock.pocket import build_pocket
from .molmodel.graph import detect_torsions
from .molmodel.smiles import graph_features, parse_smiles
from .molmodel.types import Element, Pocket

# (template, heavy atoms, rings, attachment atom can take a branch); ``{r}`` is a ring digit.
_LINKERS = (
    ("C", 1, 0, True),
    ("CC", 2, 0, True),
    ("N", 1, 0, False),
    ("O", 1, 0, False),
    ("S", 1, 0, False),
    ("C(C)", 2, 0, True),
    ("C(O)", 2, 0, True),
    ("C(N)", 2, 0, True),
    ("C(F)", 2, 0, True),
    ("C(=O)", 2, 0, False),
    ("C(=O)N", 3, 0, False),
    ("C(C)(C)", 3, 0, False),
    ("c{r}ccc(cc{r})", 6, 1, False),
    ("c{r}ccc(nc{r})", 6, 1, False),
    ("c{r}ccc(s{r})", 5, 1, False),
    ("C{r}CCC(CC{r})", 6, 1, True),
    ("C{r}CC(C{r})", 4, 1, True),
)
# Terminal groups written to end a chain, and the same groups written to start one.
_CAPS = (
    ("C", 1, 0),
    ("O", 1, 0),
    ("N", 1, 0),
    ("F", 1, 0),
    ("Cl", 1, 0),
    ("Br", 1, 0),
    ("OC", 2, 0),
    ("C#N", 2, 0),
    ("C(=O)O", 3, 0),
    ("C(F)(F)F", 4, 0),
    ("c{r}ccccc{r}", 6, 1),
    ("C{r}CCCCC{r}", 6, 1),
    ("c{r}ccncc{r}", 6, 1),
)
_HEADS = (
    ("C", 1, 0),
    ("O", 1, 0),
    ("N", 1, 0),
    ("F", 1, 0),
    ("Cl", 1, 0),
    ("Br", 1, 0),
    ("CO", 2, 0),
    ("N#C", 2, 0),
    ("OC(=O)", 3, 0),
    ("FC(F)(F)", 4, 0),
    ("c{r}ccccc{r}", 6, 1),
    ("C{r}CCCCC{r}", 6, 1),
    ("c{r}ccncc{r}", 6, 1),
)
_MAX_RINGS = 9


def random_smiles(rng: np.random.Generator, min_heavy: int = 8, max_heavy: int = 30, branch_p: float = 0.25) -> str:
    """One SMILES string: a capped chain of linker fragments with occasional branches."""
    target = int(rng.integers(min_heavy, max_heavy + 1))
    parts: list[str] = []
    heavy = 0
    rings = 0

    def pick(table):
        nonlocal rings, heavy
        while True:
            entry = table[int(rng.integers(len(table)))]
            if rings + entry[2] <= _MAX_RINGS:
                break
        if entry[2]:
            rings += 1
        heavy += entry[1]
        return entry[0].replace("{r}", str(rings)), entry

    parts.append(pick(_HEADS)[0])
    while heavy < target - 1:
        text, entry = pick(_LINKERS)
        parts.append(text)
        if entry[3] and rng.random() < branch_p and heavy < target - 1:
            parts.append(f"({pick(_CAPS)[0]})")
    parts.append(pick(_CAPS)[0])
    return "".join(parts)


def generate_library(n: int, seed: int = 0, min_heavy: int = 8, max_heavy: int = 30) -> list[str]:
    """``n`` distinct, parseable SMILES strings; the same arguments give the same list."""
    rng = np.random.default_rng(seed)
    out: list[str] = []
    seen: set[str] = set()
    while len(out) < n:
        smiles = random_smiles(rng, min_heavy, max_heavy)
        if smiles in seen:
            continue
        parse_smiles(smiles)
        seen.add(smiles)
        out.append(smiles)
    return out


def synthetic_pocket(
    seed: int = 0,
    radius: float = 9.0,
    shell: tuple[float, float] = (7.0, 9.0),
    n_protein: int = 220,
    spacing: float = 0.5,
    pocket_id: str | None = None,
) -> Pocket:
    """A cup of protein atoms around the origin, open towards a random direction."""
    rng = np.random.default_rng(seed)
    opening = rng.normal(size=3)
    opening /= np.linalg.norm(opening)
    coords = []
    while len(coords) < n_protein:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        if d @ opening > 0.5:
            continue
        coords.append(d * rng.uniform(*shell))
    elements = tuple(rng.choice([Element.C, Element.C, Element.N, Element.O, Element.S], size=n_protein))
    return build_pocket(
        tuple(Element(int(e)) for e in elements),
        np.array(coords),
        (0.0, 0.0, 0.0),
        radius,
        spacing,
        pocket_id=pocket_id or f"synth{seed}",
    )


def cost_terms(smiles: str) -> tuple[int, int]:
    """``(n_heavy, n_torsions)`` of a SMILES string."""
    ligand = detect_torsions(parse_smiles(smiles))
    return ligand.n_heavy, ligand.n_torsions


def synthetic_timings(
    n: int, seed: int = 0, a: float = 0.1, sigma: float = 0.3, min_heavy: int = 4, max_heavy: int = 40
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Library plus feature matrix and times ``t = a*n*m + N(0, sigma)`` clipped at zero.

    The noise comes from its own generator seeded with ``seed + 1`` so the
    times are a fixed function of ``(n, seed)``.
    """
    library = generate_library(n, seed, min_heavy, max_heavy)
    features = np.array([graph_features(parse_smiles(s)) for s in library], dtype=float)
    nm = np.array([math.prod(cost_terms(s)) for s in library], dtype=float)
    noise = np.random.default_rng(seed + 1).normal(0.0, sigma, size=n)
    times = np.maximum(a * nm + noise, 0.0)
    return library, features, times
