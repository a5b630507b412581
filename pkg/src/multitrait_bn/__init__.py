"""Multi-trait Gaussian Bayesian networks over SNP genotypes and phenotypes."""

__version__ = "0.1.0"

from .averaging import ArcStrengthTable, arc_strengths, averaged_network, estimate_threshold
from .data_io import (Dataset, GenotypeMatrix, TraitMatrix, filter_maf, load_dataset,
                      load_genotypes, load_traits, prune_correlated, standardize)
from .errors import (BnError, ConfigError, CycleError, DataError, GraphError,
                     InsufficientSupportError, NumericalError, TierViolationError)
from .gblup import GblupModel, build_gblup, gblup_bn, joint_covariance, verify_equivalence
from .graph import SNP, TRAIT, Dag, Node
from .inference import (Evidence, JointGaussian, QueryResult, bn_from_joint, condition_exact,
                        logic_sample, predict, query, to_joint)
from .modelfile import ModelFile, to_dot
from .params import (FixedLambda, GaussianBn, GcvLambda, KFoldLambda, LocalDistribution, fit,
                     fit_ols, fit_ridge)
from .pipeline import CvConfig, CvReport, learn_bn, oracle_rho, predictive_correlation, run_cv
from .simulate import SimSpec, TraitSpec, simulate
from .stats import ci_test, partial_corr
from .structure import SearchConfig, bic_score, hill_climb, hiton_pc, mb_filter
