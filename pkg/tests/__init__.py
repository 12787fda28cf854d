# Tests for LMRN
