import numpy as np
import pytest

from knoblab import regressor, worldmodel


@pytest.fixture(scope="session")
def tiny_manifest():
    """Small deterministic world shared by regressor/explain/service tests."""
    return worldmodel.make_world(6, 20, jitter=0.02, noise_sd=1.0, master_seed=13)


@pytest.fixture(scope="session")
def model32():
    """Untrained 32x32 model with a fixed label range; enough for API contracts."""
    model = regressor.init_model(32, seed=0)
    model.label_min, model.label_max = 80.0, 180.0
    return model


@pytest.fixture(scope="session")
def quick_trained(tiny_manifest):
    """A briefly trained 32x32 model plus its manifest and rendered images."""
    images = regressor.render_dataset(tiny_manifest.samples, 32)
    model = regressor.init_model(32, seed=0)
    cfg = regressor.TrainConfig(epochs=8, batch_size=16, lr=1e-2, seed=0)
    model, metrics = regressor.train(model, tiny_manifest, cfg, images=images)
    return model, tiny_manifest, images, metrics
