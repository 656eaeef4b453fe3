//! The `run` command: drive a stream through the memory pipeline, export the
//! global snapshot, and optionally export breakpoint snapshots mid-stream.

use std::path::{Path, PathBuf};

use tokmem::error::Error;
use tokmem::snapshot::{
    assemble_breakpoint, assemble_global, export_snapshot, export_snapshot_json, MemorySnapshot,
};
use tokmem::stream::{
    drive_with, generate_synthetic, read_stream, DriveError, MemoryPipeline, SyntheticSceneSpec,
};
use tokmem::token::FrameTokens;

use crate::args::{RunArgs, RunSource};
use crate::report_error;

fn write_snapshot(snapshot: &MemorySnapshot, path: &Path, json: bool) -> Result<(), Error> {
    if json {
        export_snapshot_json(snapshot, path)
    } else {
        export_snapshot(snapshot, path)
    }
}

fn breakpoint_path(output: &Path, ordinal: u64) -> PathBuf {
    PathBuf::from(format!("{}.bp{}", output.display(), ordinal))
}

pub fn cmd_run(args: RunArgs) -> i32 {
    let config = args.config.clone();
    let mut pipeline = match MemoryPipeline::new(&config) {
        Ok(p) => p,
        Err(e) => return report_error(&e, None),
    };

    let source: Box<dyn Iterator<Item = Result<FrameTokens, Error>>> = match &args.source {
        RunSource::Input(path) => match read_stream(path, &config) {
            Ok(reader) => Box::new(reader),
            Err(e) => return report_error(&e, None),
        },
        RunSource::Synthetic {
            frames,
            scenes,
            noise,
            seed,
        } => {
            let spec = SyntheticSceneSpec {
                scene_count: *scenes,
                frames_per_scene: frames_per_scene(*frames, *scenes),
                noise_sigma: *noise,
                seed: *seed,
            };
            match generate_synthetic(&spec, &config) {
                Ok(stream) => Box::new(stream.take(*frames as usize).map(Ok)),
                Err(e) => return report_error(&e, None),
            }
        }
    };

    let mut written: Vec<(u64, PathBuf)> = Vec::new();
    let breakpoints = args.breakpoints.clone();
    let output = args.output.clone();
    let json = args.json;
    let stats = {
        let hook = |ordinal: u64, frame: &FrameTokens, state: &MemoryPipeline| {
            if breakpoints.binary_search(&ordinal).is_ok() {
                let snapshot =
                    assemble_breakpoint(state.long_memory(), state.short_memory(), frame)?;
                let path = breakpoint_path(&output, ordinal);
                write_snapshot(&snapshot, &path, json)?;
                written.push((ordinal, path));
            }
            Ok(())
        };
        match drive_with(source, &config, &mut pipeline, hook) {
            Ok(stats) => stats,
            Err(DriveError { frame, source }) => return report_error(&source, Some(frame)),
        }
    };

    let global = assemble_global(pipeline.long_memory());
    if let Err(e) = write_snapshot(&global, &args.output, args.json) {
        return report_error(&e, None);
    }

    let skipped: Vec<u64> = args
        .breakpoints
        .iter()
        .copied()
        .filter(|b| *b > stats.frames)
        .collect();
    let stdout_report = serde_json::json!({
        "frames": stats.frames,
        "flushes": stats.flushes,
        "merges": stats.merges,
        "elapsed_ms": stats.elapsed.as_secs_f64() * 1e3,
        "long_term_tokens": pipeline.long_memory().total_tokens(),
        "short_term_frames": pipeline.short_memory().len(),
        "snapshot": args.output.display().to_string(),
        "snapshot_tokens": global.token_count(),
        "snapshot_bytes": global.byte_cost(),
        "snapshot_format": if args.json { "json" } else { "binary" },
        "breakpoints_written": written
            .iter()
            .map(|(ordinal, path)| serde_json::json!({
                "frame": ordinal,
                "path": path.display().to_string(),
            }))
            .collect::<Vec<_>>(),
        "breakpoints_skipped": skipped,
    });
    println!("{stdout_report}");
    0
}

/// Split F total frames across S scenes; the stream is truncated back to F.
fn frames_per_scene(frames: u64, scenes: usize) -> usize {
    if frames == 0 {
        return 1;
    }
    (frames as usize).div_ceil(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_split_covers_requested_frames() {
        assert_eq!(frames_per_scene(0, 4), 1);
        assert_eq!(frames_per_scene(100, 4), 25);
        assert_eq!(frames_per_scene(101, 4), 26);
        assert_eq!(frames_per_scene(3, 4), 1);
        for (frames, scenes) in [(1u64, 1usize), (7, 3), (100, 4), (9999, 7)] {
            let per = frames_per_scene(frames, scenes);
            assert!(per * scenes >= frames as usize);
        }
    }

    #[test]
    fn breakpoint_paths_append_ordinal() {
        let path = breakpoint_path(Path::new("out/snap.mcss"), 42);
        assert_eq!(path, PathBuf::from("out/snap.mcss.bp42"));
    }
}
