import numpy as np
import pytest

from src.app.pipeline.schemas.detection import AggregationMode
from src.app.pipeline.schemas.synth import AnnotatedSceneSpec
from src.app.pipeline.services.classifier_service import HeuristicClassifier
from src.app.pipeline.services.detection_service import (
    detect_bunches,
    match_detections,
)
from src.app.pipeline.services.metrics_service import (
    aggregate_cluster_metrics,
)
from src.app.pipeline.services.synth_service import (
    generate_annotated_image,
    make_rng,
)

IMAGES = 10


@pytest.mark.asyncio
async def test_heuristic_pipeline_finds_most_bunches():
    counts = make_rng(5).integers(5, 20, size=IMAGES, endpoint=True)
    classifier = HeuristicClassifier()
    per_image = []

    for seed, count in enumerate(counts.tolist()):
        scene = generate_annotated_image(
            AnnotatedSceneSpec(bunch_count=count, seed=seed)
        )
        detections = await detect_bunches(scene.image, classifier, jobs=4)
        per_image.append(match_detections(detections.boxes, scene.regions))

    pooled = aggregate_cluster_metrics(per_image, AggregationMode.POOLED)
    assert sum(c.gc for c in per_image) == counts.sum()
    assert pooled.acc >= 0.9
    assert pooled.recall == pooled.acc
    assert pooled.precision >= 0.9
