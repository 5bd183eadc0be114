import os

import pandas as pd

from slip_perception.config import PipelineConfig, parse_mask
from slip_perception.constants import ABLATION_ROW_NAMES, BUNDLE_FILE_NAME
from slip_perception.options import resolve_path
from slip_perception.options.evaluate.evaluator import Evaluator, OBJECTS_FILE_NAME
from slip_perception.options.train.trainer import Trainer
from slip_perception.pipeline import metrics
from slip_perception.utils.io import ensure_writable_dir
from slip_perception.utils.string_tools import print_colored
from slip_perception.utils.timer import Timer

OBJECT_SUMMARY_FILE_NAME = 'object_summary.csv'


class Ablation:
    """One detector per modality set, evaluated per condition, collected into one table."""

    def __init__(self, config: PipelineConfig, manifest_path, out_dir):
        self.config = config
        self.manifest_path = resolve_path(manifest_path)
        self.out_dir = ensure_writable_dir(out_dir)
        self.episodes = {}

    def run(self) -> pd.DataFrame:
        retrain = self.config.ablation.retrain_per_modality
        rows, object_rows = [], []
        shared_bundle = None
        if not retrain:
            shared_bundle = self.train('all', parse_mask('all'))
        for name in self.config.ablation.masks:
            modalities = parse_mask(name)
            set_name = ABLATION_ROW_NAMES.get(name, name)
            if retrain:
                bundle_path, mask = self.train(name, modalities), None
            else:
                bundle_path, mask = shared_bundle, modalities
            evaluator = Evaluator(
                self.config, bundle_path, self.manifest_path, os.path.join(self.out_dir, name, 'eval'),
                mask=mask, set_name=set_name, episodes=self.episodes,
            )
            rows.append(evaluator.evaluate())
            objects_path = os.path.join(evaluator.out_dir, OBJECTS_FILE_NAME)
            if os.path.isfile(objects_path):
                object_rows.append(pd.read_csv(objects_path, float_precision='round_trip'))

        rows = pd.concat(rows, ignore_index=True)
        table = metrics.results_table(rows)
        metrics.write_table(table, self.out_dir)
        if object_rows:
            summary = metrics.object_summary(pd.concat(object_rows, ignore_index=True))
            summary.to_csv(os.path.join(self.out_dir, OBJECT_SUMMARY_FILE_NAME), index=False)
        print_colored('Ablation table', table.to_string(float_format=lambda v: f'{v:.4f}'), 'green')
        print_colored('', f'time: {Timer().get_time_since_start()}', 'white')
        return table

    def train(self, name, modalities) -> str:
        out_dir = os.path.join(self.out_dir, name)
        Trainer(self.config, self.manifest_path, out_dir, modalities, episodes=self.episodes).train()
        return os.path.join(out_dir, BUNDLE_FILE_NAME)
