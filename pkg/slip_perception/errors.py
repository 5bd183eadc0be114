from slip_perception.constants import EXIT_CONFIG_ERROR, EXIT_DATA_ERROR, EXIT_TRAINING_FAILURE


class SlipPerceptionError(Exception):
    exit_code = 1


class ConfigError(SlipPerceptionError):
    exit_code = EXIT_CONFIG_ERROR


class DegenerateRangeError(ConfigError):
    pass


class DataError(SlipPerceptionError):
    exit_code = EXIT_DATA_ERROR


class MissingModalityError(DataError):
    def __init__(self, modality, episode_id=None):
        self.modality = modality
        where = f' in episode {episode_id}' if episode_id else ''
        super().__init__(f'Modality {getattr(modality, "value", modality)} has no frames{where}')


class NonMonotoneTimestampError(DataError):
    pass


class ShapeMismatchError(DataError):
    pass


class UndefinedMetricError(DataError):
    pass


class ThresholdMissingError(DataError):
    pass


class TrainingFailureError(SlipPerceptionError):
    exit_code = EXIT_TRAINING_FAILURE

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f'{message} (epoch {epoch})'
        super().__init__(message)
