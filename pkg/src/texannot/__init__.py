"""Machine-assisted annotation for texture-dominated image collections."""

__version__ = "0.1.0"

from .imaging import AugmentSpec, Raster, Rect, augment, crop, generate_windows, resize
from .geometry import AdjacencyMatrix, Polygon, build_adjacency, connected_components, convex_hull, rects_overlap
from .classifier import ClassDistribution, SoftmaxModel, featurize, gradient_of_loss, load_model, predict, save_model, train
from .segmenter import ProposedSegment, WindowClassification, classify_windows, group_segments, segment_image
from .evaluation import ClassMask, EvalReport, aggregate, classifier_metrics, pixel_precision_recall, rasterize_hull
from .ranking import rank_unannotated, score_image
from .synthgen import GroundTruth, SceneSpec, generate_corpus, generate_scene
from .dataprep import Corpus, DatasetSplit, TrainingPatch, build_dataset, extract_background_patches, extract_class_patches
from .store import AnnotationRecord, DecisionRecord, ImageClassScore, Store
