from .catalog import (
    SOURCE_TAGS,
    CatalogEntry,
    CatalogError,
    SeedCatalog,
    builtin_catalog,
    catalog_from_dicts,
    ingest_seed_catalog,
    save_catalog,
)
from .dataset import DatasetError, composition_report, load_dataset, write_dataset
from .filters import (
    WORKLOAD_MAX_MS,
    WORKLOAD_MIN_MS,
    FilterCriteria,
    FilterVerdict,
    filter_corpus,
    filter_statistics,
    filter_task,
    probe_seeds,
)
from .similarity import (
    HISTOGRAM_BINS,
    decontaminate,
    max_similarity,
    similarity_histogram,
    structural_similarity,
    tree_edit_distance,
)
from .synth import (
    DEFAULT_MIX,
    MAX_K,
    SynthesisError,
    chain_length,
    level_for_k,
    parse_provenance_category,
    sample_corpus,
    synthesize_composite,
)

__all__ = [
    "DEFAULT_MIX",
    "HISTOGRAM_BINS",
    "MAX_K",
    "SOURCE_TAGS",
    "WORKLOAD_MAX_MS",
    "WORKLOAD_MIN_MS",
    "CatalogEntry",
    "CatalogError",
    "DatasetError",
    "FilterCriteria",
    "FilterVerdict",
    "SeedCatalog",
    "SynthesisError",
    "builtin_catalog",
    "catalog_from_dicts",
    "chain_length",
    "composition_report",
    "decontaminate",
    "filter_corpus",
    "filter_statistics",
    "filter_task",
    "ingest_seed_catalog",
    "level_for_k",
    "load_dataset",
    "max_similarity",
    "parse_provenance_category",
    "probe_seeds",
    "sample_corpus",
    "save_catalog",
    "similarity_histogram",
    "structural_similarity",
    "synthesize_composite",
    "tree_edit_distance",
    "write_dataset",
]
