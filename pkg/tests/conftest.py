import numpy as np
from hypothesis import settings
from hypothesis import strategies as st

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def amplitudes(draw, n_qubits: int):
    """Complex amplitude vector of length 2**n_qubits with norm well away from zero."""
    re = draw(st.lists(finite, min_size=2**n_qubits, max_size=2**n_qubits))
    im = draw(st.lists(finite, min_size=2**n_qubits, max_size=2**n_qubits))
    vec = np.array(re) + 1j * np.array(im)
    if np.linalg.norm(vec) < 1e-3:
        vec[0] += 1.0
    return vec


@st.composite
def unit_pairs(draw):
    """Real (x, y) with x^2 + y^2 = 1."""
    phi = draw(st.floats(0.0, 2 * np.pi, allow_nan=False))
    return (float(np.cos(phi)), float(np.sin(phi)))


alphas = st.floats(np.sqrt(0.5), 0.999, allow_nan=False)
draws = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)
