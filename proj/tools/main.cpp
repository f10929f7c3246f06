#include "commands.hpp"

int main(int argc, char** argv) {
    return treelets::cli::run(argc, argv);
}
