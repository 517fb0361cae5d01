"""Trigonometric interpolation and differentiation on uniform periodic grids."""

import numpy as np


def wavenumbers(n):
    return np.fft.fftfreq(n, 1.0 / n)


def periodic_grid(n):
    return 2.0 * np.pi * np.arange(n) / n


def differentiate(values, order=1):
    """Spectral derivative with respect to the grid parameter.

    Works along axis 0, so ``values`` may be ``(N,)`` or ``(N, d)``.
    Real input gives real output; the Nyquist mode drops out of odd
    derivatives automatically.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    k = wavenumbers(n)
    mult = (1j * k) ** order
    if values.ndim > 1:
        mult = mult.reshape((n,) + (1,) * (values.ndim - 1))
    return np.real(np.fft.ifft(np.fft.fft(values, axis=0) * mult, axis=0))


def differentiation_matrix(n, order=1):
    """Dense matrix of :func:`differentiate` acting on length-``n`` samples."""
    return differentiate(np.eye(n), order=order)


def upsample(values, m):
    """Zero-padded trigonometric upsampling from N to ``m >= N`` points."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if m < n:
        raise ValueError("upsample target must not be smaller than input")
    c = np.fft.fft(values, axis=0)
    out = np.zeros((m,) + values.shape[1:], dtype=complex)
    half = n // 2
    out[:half] = c[:half]
    out[m - half + 1:] = c[half + 1:]
    # split the Nyquist coefficient symmetrically
    out[half] += 0.5 * c[half]
    out[m - half] += 0.5 * c[half]
    return np.real(np.fft.ifft(out, axis=0)) * (m / n)


class PeriodicInterpolant:
    """Evaluate the trigonometric interpolant of periodic samples anywhere.

    Samples live at ``theta_i = 2*pi*i/N``. The trailing shape of the
    samples is preserved, so vector-valued data such as curve points
    ``(N, 2)`` work directly. The Nyquist mode is taken as a pure cosine.
    """

    def __init__(self, samples):
        samples = np.asarray(samples, dtype=float)
        self.n = samples.shape[0]
        self.trailing = samples.shape[1:]
        c = np.fft.rfft(samples.reshape(self.n, -1), axis=0) / self.n
        c[1:(self.n + 1) // 2] *= 2
        self.coeffs = c
        self.k = np.arange(c.shape[0], dtype=float)

    def _phase(self, theta):
        # powers of exp(i theta) by cumulative products: much cheaper than one exp per entry
        z = np.exp(1j * theta.reshape(-1))
        p = np.empty((z.size, self.k.size), dtype=complex)
        p[:, 0] = 1
        if self.k.size > 1:
            p[:, 1:] = np.cumprod(np.broadcast_to(z[:, None], (z.size, self.k.size - 1)), axis=1)
        return p

    def __call__(self, theta, order=0):
        theta = np.asarray(theta, dtype=float)
        c = self.coeffs * ((1j * self.k) ** order)[:, None]
        vals = np.real(self._phase(theta) @ c)
        return vals.reshape(theta.shape + self.trailing)

    def derivatives(self, theta, orders=(0, 1, 2)):
        """Several derivative orders at once, sharing the phase matrix."""
        theta = np.asarray(theta, dtype=float)
        phase = self._phase(theta)
        out = []
        for order in orders:
            c = self.coeffs * ((1j * self.k) ** order)[:, None]
            out.append(np.real(phase @ c).reshape(theta.shape + self.trailing))
        return out
