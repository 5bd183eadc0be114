from enum import Enum


class Modality(str, Enum):
    RGB = 'rgb'
    DEPTH = 'depth'
    AUDIO = 'audio'
    FORCE_TORQUE = 'ft'


class Condition(str, Enum):
    STANDING = 'standing'
    MOVING = 'moving'
    VAD = 'vad'


class MovingPattern(str, Enum):
    FORWARD = 'forward'
    BACKWARD = 'backward'
    SIDEWAYS = 'sideways'
    ROTATE = 'rotate'


class Label(str, Enum):
    NORMAL = 'normal'
    ABNORMAL = 'abnormal'


# fusion concatenation order, persisted with every bundle
MODALITY_ORDER = (Modality.RGB, Modality.DEPTH, Modality.AUDIO, Modality.FORCE_TORQUE)

# payload rank per modality: rgb H x W x 3, depth H x W, audio chunk, ft vector
MODALITY_RANK = {
    Modality.RGB: 3,
    Modality.DEPTH: 2,
    Modality.AUDIO: 1,
    Modality.FORCE_TORQUE: 1,
}

# command-line names of the modality sets compared in the ablation table
MASK_ALIASES = {
    'rgb': Modality.RGB,
    'depth': Modality.DEPTH,
    'mic': Modality.AUDIO,
    'audio': Modality.AUDIO,
    'ft': Modality.FORCE_TORQUE,
}
ABLATION_MASKS = ('all', 'ft', 'rgb', 'depth', 'mic')
ABLATION_ROW_NAMES = {
    'all': 'Multimodal',
    'ft': 'Force-Torque',
    'rgb': 'RGB',
    'depth': 'Depth',
    'mic': 'MIC',
}

GRID_HZ = 10.0
HOLD_TOLERANCE_PERIODS = 0.5
ABNORMAL_WINDOW_S = 0.5
TIME_EPS = 1e-9

RGB_RANGE = (0.0, 255.0)
DEPTH_MAX_MM = 4000.0
FT_CHANNELS = 6
GRAVITY = 9.81

EPISODE_MAGIC = b'SLIP'
EPISODE_FORMAT_VERSION = 1
EPISODE_MANIFEST_FILE_NAME = 'episode.json'
STREAM_FILE_SUFFIX = '.slip'
DATASET_MANIFEST_FILE_NAME = 'manifest.tsv'

# dtype codes of the episode record files
DTYPE_CODES = {
    0: '<f8',
    1: '<f4',
    2: '|u1',
    3: '<u2',
    4: '<i2',
}

BUNDLE_FORMAT_VERSION = 1
BUNDLE_FILE_NAME = 'bundle.npz'
CONFIG_VERSION = 1

TRAIN_LOG_FILE_NAME = 'train_log.csv'
VAL_SCORES_FILE_NAME = 'val_scores.csv'

SVD_RELATIVE_TOLERANCE = 1e-6
DEFAULT_THRESHOLD_QUANTILE = 0.9

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_TRAINING_FAILURE = 4

# object presets named after the household objects of the slip protocol
OBJECT_PRESETS = {
    'cracker_box': {'weight_g': 421.0, 'size_px': 7, 'texture_contrast': 0.9, 'sound_gain': 0.6, 'color': (200, 40, 30)},
    'bag_of_cookies': {'weight_g': 30.0, 'size_px': 5, 'texture_contrast': 0.7, 'sound_gain': 0.15, 'color': (230, 200, 60)},
    'furry_toy': {'weight_g': 102.0, 'size_px': 6, 'texture_contrast': 0.4, 'sound_gain': 0.1, 'color': (150, 110, 70)},
    'book': {'weight_g': 214.0, 'size_px': 6, 'texture_contrast': 0.8, 'sound_gain': 0.5, 'color': (40, 70, 160)},
    'metal_cup': {'weight_g': 118.0, 'size_px': 4, 'texture_contrast': 0.6, 'sound_gain': 0.9, 'color': (170, 170, 180)},
    'plastic_plate': {'weight_g': 38.0, 'size_px': 6, 'texture_contrast': 0.5, 'sound_gain': 0.35, 'color': (60, 180, 90)},
    'board_eraser': {'weight_g': 10.0, 'size_px': 3, 'texture_contrast': 0.5, 'sound_gain': 0.1, 'color': (30, 30, 30)},
    'plastic_bottle': {'weight_g': 423.0, 'size_px': 5, 'texture_contrast': 0.2, 'sound_gain': 0.45, 'color': (200, 220, 230)},
}
