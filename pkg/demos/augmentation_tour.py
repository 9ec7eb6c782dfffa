"""Apply each augmentation to a tiny batch and show how rows and norms move."""

import numpy as np

from repaug.augment import AugmentationSpec, Method, augment, spawn_rng

h = np.array([[1.0, 0.0, 2.0], [0.0, 3.0, -1.0], [2.0, 2.0, 2.0], [-1.0, 1.0, 0.0]])
print("input norms:", np.round(np.linalg.norm(h, axis=1), 3))

for method in Method:
    out = augment(h, AugmentationSpec(method), spawn_rng(0, 1))
    norms = np.round(np.linalg.norm(out, axis=1), 3)
    print(f"{method.value:>9}: norms {norms}  first row {np.round(out[0], 3)}")

# null parameters leave the batch untouched
same = all(np.array_equal(augment(h, AugmentationSpec(m).with_null_parameters(), spawn_rng(0, 1)), h) for m in Method)
print("null parameters are identities:", same)
