"""Self-explainable GNN node classification.

Predicts an unlabeled node's class from its K most similar labeled nodes
under an interpretable similarity (node-level cosine fused with
cross-subgraph edge matching) and returns the retrieved neighbors, their
similarity decomposition and the edge matchings as the explanation.
"""

from .autodiff import AdamState, ContractError, ShapeError, Tape, Tensor, adam_step, xavier_init
from .datagen import (BaShapesConfig, CoraLikeConfig, GroundTruth, SynCoraConfig,
                      gen_ba_graph, gen_ba_shapes, gen_cora_like, gen_syn_cora)
from .encoder import EncoderParams, NodeEmbeddings, embed_edges, encode_nodes, load_model, save_model
from .evaluation import (MetricsReport, classification_accuracy, edge_matching_accuracy,
                         explanation_auc, precision_at_k, robustness_sweep, roc_auc)
from .explain import (Explanation, NeighborSet, Prediction, crucial_subgraph,
                      edge_importance, explain_target, k_nearest_labeled, predict,
                      predict_many)
from .graph import (Graph, NormalizedAdjacency, Subgraph, augment, khop_subgraph,
                    largest_connected_component, load_dataset, normalize_adjacency,
                    save_dataset)
from .similarity import (EdgeMatching, SimilarityScore, SimilarityScorer, SubgraphIndex,
                         match_edges, node_similarity, overall_similarity,
                         structure_similarity)
from .training import (SampledBatch, TrainConfig, TrainResult, TrainingDiverged,
                       classification_loss, contrastive_loss, sample_training_batch,
                       train)

__version__ = "0.1.0"
