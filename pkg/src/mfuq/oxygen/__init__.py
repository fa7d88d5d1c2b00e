"""Reduced 2D tissue oxygenation testbed with radiobiological QoIs."""
