"""capseg: superpixel segmentation (SLIC / quick shift), per-superpixel
texture/color features, Laplacian-score selection, and SMO-trained SVM
classification of abnormal regions in endoscopy-style frames, with
pixel-level evaluation and a timing benchmark."""

from .bench import BenchRow, bench_summary, bench_to_csv, run_bench
from .classify import (
    SvmModel,
    SvmParams,
    kkt_violation,
    load_model,
    save_model,
    svm_predict,
    svm_train,
)
from .core import (
    DISEASES,
    ChannelStack,
    DatasetManifest,
    Frame,
    ManifestRecord,
    Mask,
    SplitPlan,
    derive_channels,
    load_frame,
    load_manifest,
    load_mask,
    save_frame,
    save_manifest,
    save_mask,
    split_by_patient,
)
from .evaluate import (
    Measures,
    PixelConfusion,
    Report,
    aggregate,
    measures,
    pixel_confusion,
    report_to_csv,
    write_overlay,
)
from .features import (
    CHANNEL_ORDER,
    FEATURE_NAMES,
    MEASURE_ORDER,
    N_FEATURES,
    CodeMap,
    LbpParams,
    SuperpixelLabels,
    channel_moments,
    extract_features,
    label_superpixels,
    lbp_map,
    load_features,
    save_features,
    uniform_bin_table,
    uniform_lbp_map,
)
from .pipeline import PipelineConfig, config_overrides, load_config, run_pipeline
from .selection import (
    FeatureRanking,
    ScorerParams,
    laplacian_scores,
    save_ranking,
    select_features,
)
from .superpixel import (
    QsParams,
    SlicParams,
    SuperpixelMap,
    enforce_connectivity,
    load_superpixel_map,
    quickshift_segment,
    save_superpixel_map,
    slic_init_centers,
    slic_segment,
)
from .synth import natural_frame, synth_dataset, synth_frame

__version__ = "0.1.0"
