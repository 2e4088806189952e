"""Online bagging ensembles for data streams with mini-batch parallel training."""

from .core import Attribute, DomainError, Instance, Prediction, RngStream, Schema, argmax_class, poisson_sample
from .datasets import (BENCHMARK_DATASETS, DatasetDescriptor, ParseError, SyntheticSpec, generate,
                       load_arff, load_csv)
from .drift import AdwinDetector
from .ensembles import (GLOBAL, VARIANTS, ChangeEvent, ChangeLog, Ensemble, EnsembleConfig,
                        ensemble_classify, member_train_batch, obadwin_global_step)
from .evaluation import (ConfusionMatrix, MetricsReport, batch_size_sweep, change_count_sweep,
                         prequential_run)
from .executor import ExecConfig, ExecutionError, RunResult, WorkerPool, run
from .hoeffding import AshtTree, HoeffdingTree, hoeffding_bound
from .locality import (AccessTrace, RDHistogram, decade_bins, full_training_trace, log_bins,
                       poisson_weight_trace, rd_bound_minibatch, rd_histogram, rd_total,
                       reuse_distance_sequence)

__version__ = "0.1.0"
