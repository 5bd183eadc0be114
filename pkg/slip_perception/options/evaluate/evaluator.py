import os
from typing import Dict, List, Sequence

import pandas as pd

from slip_perception.config import PipelineConfig
from slip_perception.constants import Modality, MODALITY_ORDER
from slip_perception.options import resolve_path, validate_manifest_splits
from slip_perception.pipeline import metrics
from slip_perception.pipeline.bundle import load_bundle
from slip_perception.pipeline.episode_io import read_manifest
from slip_perception.pipeline.features import EpisodeFeatures, collect, load_split
from slip_perception.utils.io import ensure_writable_dir
from slip_perception.utils.string_tools import print_colored, print_verbose
from slip_perception.utils.timer import Timer

SCORES_FILE_NAME = 'scores.csv'
OBJECTS_FILE_NAME = 'objects.csv'


def modality_set_name(modalities: Sequence[Modality]) -> str:
    if list(modalities) == list(MODALITY_ORDER):
        return 'all'
    return '+'.join('mic' if m == Modality.AUDIO else m.value for m in modalities)


class Evaluator:
    def __init__(self, config: PipelineConfig, bundle_path, manifest_path, out_dir, mask: Sequence[Modality] = None,
                 set_name: str = None, episodes: Dict[str, List[EpisodeFeatures]] = None):
        self.config = config
        self.bundle_path = resolve_path(bundle_path)
        self.manifest_path = resolve_path(manifest_path)
        self.out_dir = ensure_writable_dir(out_dir)
        self.mask = list(mask) if mask is not None else None
        self.set_name = set_name
        self.episodes = episodes if episodes is not None else {}

    def load(self, bundle) -> List[EpisodeFeatures]:
        if 'eval' not in self.episodes:
            manifest = read_manifest(self.manifest_path)
            validate_manifest_splits(manifest, ['eval'], self.manifest_path)
            self.episodes['eval'] = load_split(manifest, 'eval', bundle.sync, bundle.mfcc, workers=self.config.workers)
        return self.episodes['eval']

    def evaluate(self) -> pd.DataFrame:
        """Scores the eval split and writes the reports; returns one table row per condition."""
        bundle = load_bundle(self.bundle_path)
        mask = bundle.resolve_mask(self.mask)
        set_name = self.set_name or modality_set_name(mask or bundle.modalities)
        print_colored('', f'\n\n############# Evaluating {set_name} #############', 'blue')
        samples, scored = collect(self.load(bundle))
        scores = bundle.score(samples, mask)
        scored = scored.assign(score=scores, predicted=[p.value for p in bundle.predict(scores)])
        scored.to_csv(os.path.join(self.out_dir, SCORES_FILE_NAME), index=False)

        bins = self.config.metrics.histogram_bins
        threshold = bundle.threshold
        reports = metrics.report(scored, [], threshold, bins)
        for keys in self.group_keys():
            reports.update(metrics.report(scored, keys, threshold, bins))
        for name, rep in reports.items():
            metrics.write_report(rep, os.path.join(self.out_dir, *name.split('/')))
            print_verbose(f'{name}: AUROC {rep.auroc:.4f}, AUPRC {rep.auprc:.4f}, F1 {rep.f1:.4f}')

        conditions = list(dict.fromkeys(scored['condition']))
        rows = pd.DataFrame([
            self.row(set_name, c, reports[metrics.group_name(['condition'], c)]) for c in conditions
        ])
        metrics.write_table(metrics.results_table(rows), self.out_dir)
        if self.config.metrics.per_object:
            cells = scored[['condition', 'object']].drop_duplicates().itertuples(index=False)
            pd.DataFrame([
                {**self.row(set_name, c, reports[metrics.group_name(['condition', 'object'], (c, o))]), 'object': o}
                for c, o in cells
            ]).to_csv(os.path.join(self.out_dir, OBJECTS_FILE_NAME), index=False)
        overall = reports['all']
        print_colored(
            f'{set_name}: AUROC {overall.auroc:.4f}, AUPRC {overall.auprc:.4f}, F1 {overall.f1:.4f}',
            f'reports in {self.out_dir}\ntime: {Timer().get_time_since_start()}\n',
            'green',
        )
        return rows

    def group_keys(self) -> List[List[str]]:
        keys = [[k] for k in self.config.metrics.group_by]
        if ['condition'] not in keys:
            keys.insert(0, ['condition'])
        if self.config.metrics.per_object:
            keys.append(['condition', 'object'])
        return keys

    @staticmethod
    def row(set_name, condition, rep: metrics.EvalReport) -> dict:
        return {'modality_set': set_name, 'condition': condition, 'AUROC': rep.auroc, 'AUPRC': rep.auprc, 'F1': rep.f1}
