from .config import MODALITY_KINDS, MeetingManifest, Participant, RunConfig
from .crossval import ResultRecord, assign_folds, cross_validate
from .detect import ScoreTimeline, run_detect, score_meeting, train_on_meetings, turn_silence_means
from .features import MeetingFeatures, clip_labels, extract_meeting
from .outputs import emit_outputs, roc_csv, timeline_svg
from .synth import synth_audio, synth_fixture, turn_schedule
