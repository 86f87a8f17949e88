from .transform import PositivityError, SignSearchError, TransformArtifacts, build_transform, verify_transform
from .yw import QuadratureError, YwParams, verify_yw, yw_phi, yw_phi_prime, yw_phi_second, yw_psi
