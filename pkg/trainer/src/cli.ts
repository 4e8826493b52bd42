/** Command line: train, infer, export-metrics-inputs. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { train } from "./train.js";
import { infer } from "./infer.js";
import { defaultNetSpec, defaultTrainSpec, NetMode } from "./types.js";

export async function main(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .scriptName("parec-trainer")
    .command(
      "train",
      "train a reconstruction network on a dataset directory",
      (y) =>
        y
          .option("dataset", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("mode", {
            choices: ["unet_image", "upgunet_tensor"] as const,
            default: defaultNetSpec.mode,
          })
          .option("depth", { type: "number", default: defaultNetSpec.depth })
          .option("base-channels", {
            type: "number",
            default: defaultNetSpec.baseChannels,
          })
          .option("batch-norm", { type: "boolean", default: defaultNetSpec.batchNorm })
          .option("learning-rate", {
            type: "number",
            default: defaultTrainSpec.learningRate,
          })
          .option("batch-size", { type: "number", default: defaultTrainSpec.batchSize })
          .option("epochs", { type: "number", default: defaultTrainSpec.epochs })
          .option("seed", { type: "number", default: defaultTrainSpec.seed })
          .option("lr-decay-epoch", { type: "number", default: 0 })
          .option("lr-decay-factor", { type: "number", default: 0.1 })
    )
    .command("infer", "run a checkpoint over a dataset directory", (y) =>
      y
        .option("checkpoint", { type: "string", demandOption: true })
        .option("dataset", { type: "string", demandOption: true })
        .option("out", { type: "string", demandOption: true })
    )
    .command(
      "export-metrics-inputs",
      "alias of infer: write estimates readable by the metrics CLI",
      (y) =>
        y
          .option("checkpoint", { type: "string", demandOption: true })
          .option("dataset", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
    )
    .demandCommand(1)
    .strict()
    .help();

  const args = await parser.parse();
  const command = args._[0];
  if (command === "train") {
    await train(
      args.dataset as string,
      args.out as string,
      {
        mode: args.mode as NetMode,
        depth: args.depth as number,
        baseChannels: args["base-channels"] as number,
        batchNorm: args["batch-norm"] as boolean,
      },
      {
        learningRate: args["learning-rate"] as number,
        batchSize: args["batch-size"] as number,
        epochs: args.epochs as number,
        seed: args.seed as number,
        lrDecayEpoch: (args["lr-decay-epoch"] as number) || undefined,
        lrDecayFactor: args["lr-decay-factor"] as number,
      }
    );
    console.log(`checkpoint written to ${args.out}`);
    return 0;
  }
  if (command === "infer" || command === "export-metrics-inputs") {
    await infer(args.checkpoint as string, args.dataset as string, args.out as string);
    console.log(`estimates written to ${args.out}`);
    return 0;
  }
  return 2;
}

const isMain = process.argv[1] && process.argv[1].endsWith("cli.js");
if (isMain) {
  main(hideBin(process.argv))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(err.message ?? err);
      process.exit(2);
    });
}
