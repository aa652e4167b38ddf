#include "spotfaas/executor/sandbox.hpp"

int main(int argc, char** argv) { return spotfaas::executor::sandbox_main(argc, argv); }
