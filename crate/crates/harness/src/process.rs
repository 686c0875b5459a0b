//! Child processes in their own process group, so a server and everything
//! it forks can be signalled together.

use std::fs::File;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

const POLL: Duration = Duration::from_millis(50);

pub struct GroupChild {
    child: Child,
    status: Option<ExitStatus>,
}

impl GroupChild {
    /// Runs `sh -c <command>` in `cwd` with stdout and stderr appended to `log`.
    pub fn spawn_shell(
        command: &str,
        cwd: &Path,
        env: &[(String, String)],
        log: &Path,
    ) -> std::io::Result<GroupChild> {
        let out = File::options().create(true).append(true).open(log)?;
        let err = out.try_clone()?;
        let child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .current_dir(cwd)
            .envs(env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::null())
            .stdout(out)
            .stderr(err)
            .process_group(0)
            .spawn()?;
        Ok(GroupChild {
            child,
            status: None,
        })
    }

    pub fn id(&self) -> u32 {
        self.child.id()
    }

    /// Exit status if the direct child has exited.
    pub fn try_status(&mut self) -> Option<ExitStatus> {
        if self.status.is_none() {
            self.status = self.child.try_wait().ok().flatten();
        }
        self.status
    }

    pub fn has_exited(&mut self) -> bool {
        self.try_status().is_some()
    }

    /// Waits up to `timeout`; on expiry the whole group is killed and `None`
    /// is returned.
    pub fn wait_timeout(&mut self, timeout: Duration) -> Option<ExitStatus> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(s) = self.try_status() {
                return Some(s);
            }
            if Instant::now() >= deadline {
                self.signal(libc::SIGKILL);
                let _ = self.child.wait();
                return None;
            }
            thread::sleep(POLL);
        }
    }

    fn signal(&self, sig: libc::c_int) {
        let pgid = self.child.id() as libc::pid_t;
        // SAFETY: kill(2) with a negative pid targets the process group we
        // created in spawn_shell; it has no memory-safety preconditions.
        unsafe {
            libc::kill(-pgid, sig);
        }
    }

    /// SIGTERM to the group, then SIGKILL once `grace` has elapsed.
    pub fn terminate(&mut self, grace: Duration) {
        self.signal(libc::SIGTERM);
        let deadline = Instant::now() + grace;
        while Instant::now() < deadline {
            if self.has_exited() {
                // Reap stragglers that ignored the signal.
                self.signal(libc::SIGKILL);
                return;
            }
            thread::sleep(POLL);
        }
        self.signal(libc::SIGKILL);
        self.status = self.child.wait().ok();
    }
}

impl Drop for GroupChild {
    fn drop(&mut self) {
        if self.status.is_none() {
            self.signal(libc::SIGKILL);
            let _ = self.child.wait();
        }
    }
}

/// Outcome of a shell step run to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub command: String,
    /// `None` when the step timed out or was killed by a signal.
    pub exit_code: Option<i32>,
    pub timed_out: bool,
}

/// Runs `command` to completion, logging to `log`.
pub fn run_step(
    command: &str,
    cwd: &Path,
    env: &[(String, String)],
    log: &Path,
    timeout: Duration,
) -> std::io::Result<StepOutcome> {
    let mut child = GroupChild::spawn_shell(command, cwd, env, log)?;
    let status = child.wait_timeout(timeout);
    Ok(StepOutcome {
        command: command.to_string(),
        exit_code: status.and_then(|s| s.code()),
        timed_out: status.is_none(),
    })
}
