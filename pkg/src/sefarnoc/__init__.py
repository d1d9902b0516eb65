"""Cycle-level 2D-mesh NoC simulator with link faults, a packet-drop Trojan and SeFaR mitigation."""

__version__ = "0.1.0"
