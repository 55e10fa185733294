"""Skill graphs for multi-skill motion data.

Build a directed weighted graph over reference motion frames, plan skill
switches and safety recoveries over it, and drive a closed-loop scheduler
against a deterministic surrogate tracker so switching behavior is testable
end to end.
"""

from .errors import (AlignmentError, ConfigError, DimensionMismatch, EmptyInput,
                     EmptyRestriction, EmptySkill, EStopRequired, NoTransitions,
                     ParseError, ResourceLimit, SchemaError, SkillGraphError,
                     UnknownSession, UnknownSkill, Unreachable)
from .graph import (BufferNode, CrossSegment, Edge, GraphConfig, RefNode, SkillGraph,
                    SkillGraphBuilder, buffer_count, build_graph, distance,
                    export_graph, load_graph, load_graph_text, nearest_reference,
                    without_cross_edges)
from .metrics import (RewardWeights, TrackingErrors, episode_switch_failed, fgr, nr,
                      relative_error_series, ssr, tracking_errors)
from .motion_data import (CanonicalFrame, Dataset, Frame, SkillSequence,
                          SynthesisConfig, canonicalize, label_contacts, load_dataset,
                          save_dataset, synthesize_dataset)
from .planner import (Candidate, EntryDecision, Plan, PlannerCache, TargetSet,
                      TwoStagePlan, ValueTable, best_recovery_entry, entry_check,
                      plan_graph_search, plan_nn, reconstruct_path, reverse_sssp,
                      target_prefix)
from .scheduler import (Damping, Guidance, SchedulerConfig, SchedulerEvent,
                        SkillScheduler, events_document, sample_initial_state)
from .tracker import (Disturbance, EpisodeRecord, EpisodeScript, RobotState,
                      TickRecord, TrackerConfig, apply_disturbance, episode_document,
                      load_episode_text, make_difficulty_script, run_episode,
                      step_tracker)

__version__ = "0.1.0"
