"""Experience-based biased sampling for manipulator motion planning."""
