"""qproxim: metrics, tunnels and extent certification on concrete C*-algebras."""

__version__ = "0.1.0"
