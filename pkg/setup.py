from setuptools import setup, find_packages

setup(
    name="monitored_fermions",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "python-dotenv==1.0.0",
        "pydantic==2.5.2",
        "loguru==0.7.2",
        "tqdm>=4.66.0",
        "numpy>=1.24.0",
        "scipy>=1.11.0",
        "joblib>=1.3.0",
        "threadpoolctl>=3.1.0",
    ],
)
