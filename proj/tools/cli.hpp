#ifndef KMC_TOOLS_CLI_HPP_
#define KMC_TOOLS_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace kmc::cli
{
    enum ExitCode
    {
        ExitOk = 0,
        ExitError = 1,
        ExitLost = 2,
        ExitUsage = 64
    };

    /**
     * Entry point of the kmc tool: track, eval, synth, train-decoder and
     * record-samples. Messages go to `out` and `err`; results and
     * manifest.json go to the --out directory.
     */
    int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
}

#endif
