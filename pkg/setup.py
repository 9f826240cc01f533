from setuptools import setup

setup(
    name="spatio_semantic_priors",
    version="1.0",
    description="sampling based spatio-semantic priors for object search",
    classifiers=[
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
    ],
    keywords="semantic_mapping priors motion_planning prm",
    license="MIT",
    packages=["spatio_semantic_priors"],
    python_requires=">=3.8",
    install_requires=[
        "numpy",
        "scipy",
        "omegaconf",
        "variconf",
        "shapely>=2.0",
        "networkx",
        "plyfile",
    ],
    extras_require={"test": ["pytest", "hypothesis"]},
    zip_safe=True,
    data_files=[
        (
            "spatio_semantic_priors_config/",
            [
                "config/run_default.json",
                "config/scene_default.json",
            ],
        )
    ],
    scripts=["bin/spatio_semantic_priors"],
)
