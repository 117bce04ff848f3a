"""Day-ahead PV power forecasting with a recurrent convolutional network.

Subpackages and modules
-----------------------
neuralcore   float64 layers with manual backpropagation
pvphysics    solar geometry, clear-sky irradiance, single-diode PV model
synthdata    seeded synthetic weather rasters, plant fleets and fleet power
features     windowing, persistence channel, normalization
model        the network, training and checkpoints
evaluation   metrics, persistence baseline, reports
occlusion    occlusion sensitivity and capacity density maps
storage      file formats and configuration parsing
cli          the ``pvnet`` command
"""
__version__ = "0.1.0"
