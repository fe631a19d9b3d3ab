#ifndef KMC_SYNTHETIC_HPP_
#define KMC_SYNTHETIC_HPP_

#include <cstdint>
#include <vector>

#include "kmc/features.hpp"

namespace kmc
{
    /**
     * A textured square-ish target moving at constant velocity over a static
     * textured background, optionally zooming about its centre by a fixed
     * factor per frame. Both textures are smooth random fields, so the scene
     * can be sampled at any sub-pixel position and scale.
     */
    struct SyntheticSceneConfig
    {
        int width = 320;
        int height = 240;
        int frames = 50;
        BBox start{142.0, 108.0, 36.0, 24.0};
        double vx = 2.0; // px per frame
        double vy = 1.0;
        double zoom = 1.0; // size multiplier per frame
        int textureCells = 16;
        double backgroundContrast = 0.25;
        double backgroundCellPx = 24.0;
        std::uint64_t seed = 1;
    };

    struct SyntheticSequence
    {
        std::vector<Image> frames; // gray
        std::vector<BBox> groundTruth;
    };

    BBox syntheticBox(const SyntheticSceneConfig& config, int frameIndex0);

    SyntheticSequence renderSyntheticSequence(const SyntheticSceneConfig& config);
}

#endif
