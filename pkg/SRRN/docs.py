prog_description = "Train, evaluate and analyse lightweight residual networks for single image super-resolution."

train_help_text = "Train a network on a patch manifest (or synthetic textures) and write its checkpoint"
eval_help_text = "Report PSNR/SSIM of a checkpoint per scale, next to the bicubic baseline"
upscale_help_text = "Upscale one image: bicubic upscale, then add the predicted residual to the luminance"
analyze_help_text = "Print depth, parameter count, receptive field and path statistics of an architecture"
shapes_help_text = "Train the five shape families at matched depth and tabulate their scores"
degrade_help_text = "Export the cropped HR luminance, its LR image and the bicubic upscale as PNGs"
experiment_help_text = ("Run a paired comparison: residual, relu, bn, scales, or archs (--arch against each --against,"
                        " e.g. r64-8 against vdsr)")

arch_help_text = "Architecture: a preset name or container notation such as 16_3,32_3,64_3;relu=after"
config_help_text = "key=value file of training settings; command-line flags override it"
manifest_help_text = "Dataset manifest (images=<dir>, scales, patch, stride, seed, augment)"
synthetic_help_text = "Train on this many generated textures instead of a manifest"
scales_help_text = "Comma separated scale factors out of 2, 3 and 4"
