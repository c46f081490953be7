# Schema package
