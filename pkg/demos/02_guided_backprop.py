"""
Guided backpropagation saliency
===============================

Which pixels push a trained network towards its answer? Guided
backpropagation passes a gradient through a ReLU only where the unit fired
and the incoming signal is positive, which tends to leave fewer lit pixels
than the plain input gradient.
"""

import tempfile
from pathlib import Path

import numpy as np

from orientnet import data, nn, zoo
from orientnet.guided import guided_backward, plain_gradient, render_saliency
from orientnet.imageio import Image, write_image

out = Path(tempfile.mkdtemp())

###############################################################################
# A quick model to explain (three epochs is plenty on this data).
manifest = data.augment_with_rotations(data.generate_synthetic_dataset(40, 32, seed=1, out_dir=out))
config = zoo.build_model("tiny-orient", 32)
rng = np.random.default_rng(0)
params = nn.init_params(config, "fresh", rng)
nn.fit(config, params, data.load_split(manifest, "train", 32), nn.TrainConfig(batch_size=16, epochs=3), rng)

###############################################################################
# Explain the predicted class. With no target given the argmax is used,
# ties going to the lowest index.
photo = data.read_image(manifest.resolve(manifest.records[0]))
x = data.preprocess(photo, 32, quarter_turns=1)
smap = guided_backward(config, params, x)
print("explained class", data.label_to_degrees(smap.target), "logits", np.round(smap.logits, 3))

###############################################################################
# Compare with the ordinary input gradient: count lit pixels after rendering.
guided = render_saliency(smap)
plain = render_saliency(plain_gradient(config, params, x, smap.target))
print(f"lit pixels: guided {(guided > 0).mean():.2f}, plain {(plain > 0).mean():.2f}")

###############################################################################
# Save input, guided map and plain map side by side.
shown = data.from_input_tensor(x).pixels
gray = lambda g: np.repeat(g[..., None], 3, axis=2)
write_image(out / "saliency.png", Image(np.concatenate([shown, gray(guided), gray(plain)], axis=1)))
print("wrote", out / "saliency.png")
