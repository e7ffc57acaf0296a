// Placeholder until the C API lands; keeps the shared-library target buildable.
extern "C" const char* tx_version(void) { return "0.1.0"; }
