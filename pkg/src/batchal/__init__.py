"""Batch active learning lab: trust-set guided selection with an RL policy."""

__version__ = "0.1.0"

from .clustering import Cluster, ClusterConfig, action_groups, cluster_stats, kmeans
from .dataset import (Dataset, DatasetSplit, ImbalanceSpec, Sample,
                      apply_imbalance, gen_gaussian_mixture, init_split,
                      load_csv, reveal_labels, save_csv)
from .learner import (ModelParams, TrainConfig, accuracy, cross_entropy,
                      features, predict_proba, train_from_scratch)
from .loop import (ALConfig, RunLog, aubc, f_acc, penalty_matrix, run,
                   run_baseline, summarize)
from .policy import (ReplayBuffer, RewardNet, RLConfig, Transition,
                     build_env_transitions, init_reward_net, predict_reward,
                     select_batch, train_reward_net)
from .superloss import SuperLossConfig, superloss_sigma
from .transport import sinkhorn, wasserstein
from .trustset import (TrustSet, TrustSetConfig, cl_score, el2n_score,
                       extract_trustset, second_best_trustset)

__all__ = [name for name in dir() if not name.startswith("_")]
