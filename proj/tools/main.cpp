#include "vqtt/cli.hpp"

int main(int argc, char** argv) { return vqtt::cli::run(argc, argv); }
