# Processors package 