"""p-variation of càdlàg paths, Lévy simulation, small deviations and Marcus equations."""
__version__ = "0.1.0"
