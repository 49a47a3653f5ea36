"""Feature selection with binary SPSA and its Barzilai-Borwein variant.

The heavy lifting lives in the compiled ``_spsafs`` extension; this package
re-exports its surface.
"""

from ._spsafs import (  # noqa: F401
    BbVariant,
    CvConfig,
    Dataset,
    FeatureMask,
    ModelSpec,
    MonotoneGainConfig,
    RunTrace,
    SpsaFsConfig,
    TaskKind,
    __version__,
    bound,
    cv_loss,
    derive_seed,
    exhaustive_best,
    load_csv,
    make_synthetic,
    rank_correlation,
    rank_features,
    rank_relief,
    round_mask,
    run_bspsa,
    run_bspsa_with_evaluator,
    run_spsafs,
    sbs,
    sfbs,
    sffs,
    sfs,
    write_csv,
)

__all__ = [
    "BbVariant",
    "CvConfig",
    "Dataset",
    "FeatureMask",
    "ModelSpec",
    "MonotoneGainConfig",
    "RunTrace",
    "SpsaFsConfig",
    "TaskKind",
    "__version__",
    "bound",
    "cv_loss",
    "derive_seed",
    "exhaustive_best",
    "load_csv",
    "make_synthetic",
    "rank_correlation",
    "rank_features",
    "rank_relief",
    "round_mask",
    "run_bspsa",
    "run_bspsa_with_evaluator",
    "run_spsafs",
    "sbs",
    "sfbs",
    "sffs",
    "sfs",
    "write_csv",
]
