"""Few-shot span labeling over frozen token embeddings.

The pipeline enhances enumerated span representations with intra- and
cross-span attention, aggregates query-conditioned class prototypes
(including a boundary-partitioned O class), matches spans to prototypes by
euclidean distance, and resolves span conflicts with Beam Soft-NMS.
"""

__version__ = "0.1.0"

from .corpus import Sentence, parse_bio, spans_to_bio  # noqa: F401
from .decoder import DecoderConfig, ScoredSpan, bsnms, decode, iou, softnms  # noqa: F401
from .episodes import Episode, EpisodeSpec, perturb_support, sample_episode  # noqa: F401
from .matcher import SpanPrediction, score_spans  # noqa: F401
from .nn import Parameters  # noqa: F401
from .spans import PipelineConfig, enumerate_spans  # noqa: F401
