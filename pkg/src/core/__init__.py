# Core components package
