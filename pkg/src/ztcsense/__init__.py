"""ztcsense: a desk-scale MOSFET circuit simulator and fault-injection
harness built around a temperature-compensated current sensor."""

__version__ = "0.1.0"
