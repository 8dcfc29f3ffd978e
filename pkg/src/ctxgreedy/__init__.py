"""Situation-aware exploration/exploitation for document recommendation."""

from .taxonomy import (Dimension, Taxonomy, TaxonomyError, UnknownConceptError, concept_sim,
                       depth, generate_taxonomy, lcs, load_taxonomy)
from .situation import (ContextTaxonomies, CriticalSituationSet, Criticality, SimilarityWeights,
                        Situation, criticality, exploration_epsilon, nearest_past_situation,
                        register_critical, situation_sim)
from .usermodel import CaseBase, DocumentStats, candidate_documents, get_ctr, record_feedback
from .policies import (EGState, PolicyConfig, PolicyKind, SelectionContext, contextual_select,
                       effective_epsilon, eg_update, standard_roster, select_documents)
from .simulator import (CtrSeries, Environment, EnvironmentConfig, GoldClustering, TrialRecord,
                        compare_policies, generate_environment, run_trials, threshold_sweep)

__version__ = "0.1.0"
