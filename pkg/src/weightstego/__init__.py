"""Payload embedding, extraction, scoring and detection in F32 neural-network weights."""

from .analyze import byte_entropy, embedding_rate, entropy_delta_report
from .container import ModelContainer, TensorMeta, param_at, parse_container, read_container, save_container, write_container
from .defend import detect_overlap, sanitize
from .embed import EmbedPlan, Manifest, Payload, Segment, build_plan, capacity, embed_payload
from .evaluate import EvalCell, EvalParams, quality, quality_table
from .exceptions import CapacityExceeded, ContainerError, WeightStegoError
from .extract import extract_payload, verify
from .floatcodec import EmbedMethod, Float32Parts, decompose, embed_into_param, recover_from_param
from .mininet import MiniNet, freeze_retrain, gen_dataset, replace_neurons, sweep, train
from .trigger import MatchCounter, TriggerSpec, binarize, observe, trigger_condition

__version__ = "0.1.0"
